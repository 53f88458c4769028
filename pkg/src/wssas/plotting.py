"""Report figures rendered headlessly to PNG bytes.

Output is byte-stable for equal inputs: the Agg backend, fixed sizes and
DPI, and no timestamp or software metadata in the PNG.
"""

from __future__ import annotations

import io
from collections.abc import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import PathPatch  # noqa: E402
from matplotlib.path import Path as MplPath  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "grid.linestyle": ":",
    "legend.frameon": False,
    "savefig.dpi": 100,
}
PALETTE = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"]


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def stage_counts(rows: Sequence[Mapping]) -> bytes:
    """Grouped bars of themes/stories/clusters per filter stage, log-scaled."""
    levels = ("themes", "stories", "clusters", "points")
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        width = 0.8 / len(rows)
        for i, row in enumerate(rows):
            xs = [j + (i - (len(rows) - 1) / 2) * width for j in range(len(levels))]
            vals = [max(row[lv], 0) for lv in levels]
            ax.bar(xs, vals, width, label=row["stage"], color=PALETTE[i % len(PALETTE)])
        ax.set_xticks(range(len(levels)), levels)
        ax.set_yscale("symlog")
        ax.set_ylabel("count")
        ax.set_title("Hierarchy size per filter stage")
        ax.legend()
        fig.tight_layout()
        return _png(fig)


def category_volumes(records: Sequence[Mapping]) -> bytes:
    """One stacked horizontal bar per scenario x stage, segments = category volume %."""
    ok = [r for r in records if r.get("status") == "ok"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7.0, 0.45 * max(len(ok), 1) + 1.2))
        for y, r in enumerate(ok):
            left = 0.0
            for c, pct in enumerate(r["volume_pct"]):
                ax.barh(y, pct, left=left, color=PALETTE[c % len(PALETTE)], edgecolor="white", linewidth=0.5)
                if pct >= 8:
                    ax.text(left + pct / 2, y, f"{pct:.0f}", ha="center", va="center", fontsize=7, color="white")
                left += pct
        ax.set_yticks(range(len(ok)), [f"{r['scenario']} / {r['stage']}" for r in ok])
        ax.invert_yaxis()
        ax.set_xlim(0, 100)
        ax.set_xlabel("category volume (%)")
        ax.set_title("Category-cluster volumes")
        ax.grid(axis="y", visible=False)
        fig.tight_layout()
        return _png(fig)


def metric_panels(records: Sequence[Mapping]) -> bytes:
    names = ("silhouette", "davies_bouldin", "calinski_harabasz")
    ok = [r for r in records if r.get("status") == "ok"]
    labels = [f"{r['scenario']}\n{r['stage']}" for r in ok]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.4))
        for ax, name in zip(axes, names):
            vals = [r[name] if r[name] is not None else 0.0 for r in ok]
            ax.bar(range(len(ok)), vals, color=[PALETTE[i % 3] for i in range(len(ok))])
            ax.set_xticks(range(len(ok)), labels, rotation=90, fontsize=6)
            ax.set_title(name.replace("_", "-"))
        fig.tight_layout()
        return _png(fig)


def sankey_diagram(export: Mapping) -> bytes:
    """Two-column alluvial plot of category transitions."""
    flows = export["flows"]
    total = sum(f["count"] for f in flows) or 1
    left_ids = sorted({f["from"] for f in flows})
    right_ids = sorted({f["to"] for f in flows})
    gap = 0.02

    def stacks(ids, key):
        size = {i: sum(f["count"] for f in flows if f[key] == i) / total for i in ids}
        span = 1 - gap * (len(ids) - 1)
        pos, y = {}, 1.0
        for i in ids:
            h = size[i] * span
            pos[i] = [y, y - h]
            y -= h + gap
        return pos, span

    (lpos, lspan), (rpos, rspan) = stacks(left_ids, "from"), stacks(right_ids, "to")
    lcur = {i: p[0] for i, p in lpos.items()}
    rcur = {i: p[0] for i, p in rpos.items()}
    titles_a = export.get("titles_a") or []
    titles_b = export.get("titles_b") or []

    with plt.rc_context({**RC, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        x0, x1 = 0.15, 0.85
        for f in sorted(flows, key=lambda f: (f["from"], f["to"])):
            ha_, hb = f["count"] / total * lspan, f["count"] / total * rspan
            ya, yb = lcur[f["from"]], rcur[f["to"]]
            lcur[f["from"]] -= ha_
            rcur[f["to"]] -= hb
            mid = (x0 + x1) / 2
            verts = [
                (x0, ya), (mid, ya), (mid, yb), (x1, yb),
                (x1, yb - hb), (mid, yb - hb), (mid, ya - ha_), (x0, ya - ha_), (x0, ya),
            ]
            codes = [MplPath.MOVETO, MplPath.CURVE4, MplPath.CURVE4, MplPath.CURVE4,
                     MplPath.LINETO, MplPath.CURVE4, MplPath.CURVE4, MplPath.CURVE4, MplPath.CLOSEPOLY]
            color = PALETTE[f["from"] % len(PALETTE)]
            ax.add_patch(PathPatch(MplPath(verts, codes), facecolor=color, alpha=0.45, edgecolor="none"))
        for ids, pos, x, titles, ha in (
            (left_ids, lpos, x0, titles_a, "right"),
            (right_ids, rpos, x1, titles_b, "left"),
        ):
            for i in ids:
                top, bottom = pos[i]
                ax.add_patch(plt.Rectangle((x - 0.01, bottom), 0.02, top - bottom, color=PALETTE[i % len(PALETTE)]))
                label = titles[i] if i < len(titles) else str(i)
                dx = -0.02 if ha == "right" else 0.02
                ax.text(x + dx, (top + bottom) / 2, f"{i}: {label}", ha=ha, va="center", fontsize=7)
        ax.text(x0, 1.04, export["scenario_a"], ha="center", fontweight="bold")
        ax.text(x1, 1.04, export["scenario_b"], ha="center", fontweight="bold")
        ax.set_xlim(-0.25, 1.25)
        ax.set_ylim(-0.02, 1.08)
        ax.axis("off")
        fig.tight_layout()
        return _png(fig)
