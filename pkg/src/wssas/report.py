"""Report assembly: stage-count table, per-scenario clustering table, QAG win rates.

Everything is emitted twice, as JSON and as aligned plain text, plus PNG figures.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

from . import plotting
from .categorize import SANKEY_PAIRS, SCENARIOS
from .hierarchy import STAGES, theme_breakdown
from .pipeline import (
    PRUNING,
    STAGE_STATS,
    Workspace,
    clustering_path,
    dump_json,
    evaluate_paths,
    sankey_path,
)

REPORT_JSON = "report/report.json"
REPORT_TXT = "report/report.txt"
FIGURES = "report/figures"

METRIC_NAMES = ("silhouette", "davies_bouldin", "calinski_harabasz")


def table(headers: Sequence[str], rows: Sequence[Sequence], align: str | None = None) -> str:
    """Aligned columns; ``align`` holds one 'l' or 'r' per column (numbers default right)."""
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(headers)]
    if align is None:
        align = "".join("r" if rows and isinstance(rows[0][i], (int, float)) else "l" for i in range(len(headers)))

    def line(vals):
        return "  ".join(v.rjust(w) if a == "r" else v.ljust(w) for v, w, a in zip(vals, widths, align)).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in cells]
    return "\n".join(out)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}" if abs(v) < 1000 else f"{v:.1f}"
    return str(v)


def scenario_record(clustering: Mapping) -> dict:
    metrics = clustering.get("metrics") or {}
    return {
        "scenario": clustering["scenario"],
        "stage": clustering["stage"],
        "status": clustering.get("status", "ok"),
        "k": clustering.get("k"),
        "titles": list(clustering.get("titles", [])),
        **{m: metrics.get(m) for m in METRIC_NAMES},
        "volume_pct": list(clustering.get("volume_pct", [])),
    }


def render_text(report: Mapping) -> str:
    parts = ["STAGE COUNTS", table(
        ["stage", "themes", "stories", "clusters", "points"],
        [[r["stage"], r["themes"], r["stories"], r["clusters"], r["points"]] for r in report["stage_counts"]],
    )]
    for stage, rows in report["theme_breakdown"].items():
        parts += ["", f"THEMES ({stage})", table(
            ["theme", "stories", "clusters", "points"],
            [[r["theme"], r["stories"], r["clusters"], r["points"]] for r in rows],
        )]
    if report["categorization"]:
        rows = []
        for r in report["categorization"]:
            vols = "/".join(f"{v:.1f}" for v in r["volume_pct"]) or "-"
            rows.append([r["scenario"], r["stage"], r["k"], r["silhouette"], r["davies_bouldin"], r["calinski_harabasz"], vols])
        parts += ["", "CATEGORY CLUSTERS", table(
            ["scenario", "stage", "k", "silhouette", "davies_bouldin", "calinski_harabasz", "volume_pct"],
            rows,
            "llrrrrl",
        )]
        for r in report["categorization"]:
            if r["titles"]:
                parts.append(f"  {r['scenario']}/{r['stage']}: " + "; ".join(f"{i}={t}" for i, t in enumerate(r["titles"])))
    if report["qag"]:
        parts += ["", "QAG WIN RATE (weighted >= unweighted, %)", table(
            ["stage", "stories_pct", "themes_pct", "story_units", "theme_units"],
            [[s, a["stories_pct"], a["themes_pct"], a["story_units"], a["theme_units"]] for s, a in report["qag"].items()],
            "lrrrr",
        )]
        note = next(iter(report["qag"].values())).get("consistency_note")
        if note:
            parts.append(f"note: {note}")
    return "\n".join(parts) + "\n"


def build_report(ws: Workspace) -> dict[str, bytes]:
    """Compute step for the ``report`` subcommand."""
    stage_counts = ws.read_json(STAGE_STATS)
    breakdown = {stage: theme_breakdown(ws.assignments(stage)) for stage in STAGES}
    categorization = [
        scenario_record(ws.clustering(sc, st))
        for sc in SCENARIOS
        for st in STAGES
        if ws.exists(clustering_path(sc, st))
    ]
    qag = {}
    for stage in STAGES:
        agg = evaluate_paths(stage)[1]
        if ws.exists(agg):
            qag[stage] = {k: v for k, v in ws.read_json(agg).items() if k != "stage"}

    figures: dict[str, bytes] = {f"{FIGURES}/stage_counts.png": plotting.stage_counts(stage_counts)}
    if any(r["status"] == "ok" for r in categorization):
        figures[f"{FIGURES}/category_volumes.png"] = plotting.category_volumes(categorization)
        figures[f"{FIGURES}/metrics.png"] = plotting.metric_panels(categorization)
    flows = []
    for stage in STAGES:
        for a, b in SANKEY_PAIRS:
            rel = sankey_path(stage, a, b)
            if not ws.exists(rel):
                continue
            export = ws.read_json(rel)
            name = f"{FIGURES}/sankey_{stage}_{a}__{b}.png"
            figures[name] = plotting.sankey_diagram(export)
            flows.append({"stage": stage, "scenario_a": a, "scenario_b": b, "points": sum(f["count"] for f in export["flows"]), "figure": name})

    report = {
        "stage_counts": stage_counts,
        "theme_breakdown": breakdown,
        "pruning": ws.read_json(PRUNING),
        "categorization": categorization,
        "qag": qag,
        "sankey": flows,
        "figures": sorted(figures),
    }
    return {
        REPORT_JSON: dump_json(report),
        REPORT_TXT: render_text(report).encode("utf-8"),
        **figures,
    }
