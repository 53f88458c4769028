"""Bottom-up summary-of-summaries: cluster -> story -> theme context.

Weighted mode feeds SNR-ranked inputs; unweighted mode feeds inputs in id
order. Input selection is the only step that differs between the modes.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .backends import Backend, BackendError, GenerationRequest, parse_summary
from .corpus import DataPoint
from .hierarchy import HierarchyAssignment, HierarchyIndex
from .snr import SnrScore, mean_snr, rank_order

WEIGHTED = "weighted"
UNWEIGHTED = "unweighted"
MODES = (WEIGHTED, UNWEIGHTED)


class SosError(ValueError):
    pass


@dataclass(frozen=True)
class ContextSummary:
    level: str
    id: int
    mode: str
    title: str
    body: str
    source_count: int
    input_ids: tuple

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "id": self.id,
            "mode": self.mode,
            "title": self.title,
            "body": self.body,
            "source_count": self.source_count,
            "input_ids": list(self.input_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ContextSummary:
        return cls(d["level"], int(d["id"]), d["mode"], d["title"], d["body"], int(d["source_count"]), tuple(d["input_ids"]))


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise SosError(f"unknown mode {mode!r}")


def select_cluster_inputs(
    members: Sequence[DataPoint],
    mode: str,
    n: int,
    scores: Mapping[str, SnrScore] | None = None,
) -> list[DataPoint]:
    _check_mode(mode)
    if not members:
        raise SosError("empty scope")
    by_id = {p.id: p for p in members}
    if mode == WEIGHTED:
        if scores is None:
            raise SosError("weighted mode requires SNR scores")
        order = rank_order(by_id, scores)
    else:
        order = sorted(by_id)
    return [by_id[pid] for pid in order[:n]]


def select_child_inputs(
    children: Sequence[ContextSummary],
    mode: str,
    n: int,
    child_snr: Mapping[int, float] | None = None,
) -> list[ContextSummary]:
    _check_mode(mode)
    if not children:
        raise SosError("empty scope")
    if any(c.mode != mode for c in children):
        raise SosError("child summaries do not all match the requested mode")
    if mode == WEIGHTED:
        if child_snr is None:
            raise SosError("weighted mode requires child mean SNRs")
        ordered = sorted(children, key=lambda c: (-child_snr[c.id], c.id))
    else:
        ordered = sorted(children, key=lambda c: c.id)
    return ordered[:n]


def _request(inputs: Sequence[str], seed: int) -> GenerationRequest:
    return GenerationRequest("summarize", tuple(inputs), {}, seed)


def _finish(level: str, node_id: int, mode: str, raw: str, input_ids: Sequence) -> ContextSummary:
    title, body = parse_summary(raw)
    return ContextSummary(level, node_id, mode, title, body, len(input_ids), tuple(input_ids))


def summarize_cluster(
    cluster_id: int,
    members: Sequence[DataPoint],
    mode: str,
    backend: Backend,
    n: int = 20,
    scores: Mapping[str, SnrScore] | None = None,
    seed: int = 0,
) -> ContextSummary:
    chosen = select_cluster_inputs(members, mode, n, scores)
    try:
        raw = backend.generate(_request([p.text for p in chosen], seed))
    except BackendError as exc:
        raise BackendError(f"cluster {cluster_id}: {exc}", retryable=exc.retryable, attempts=exc.attempts) from exc
    return _finish("cluster", cluster_id, mode, raw, [p.id for p in chosen])


def summarize_parent(
    level: str,
    node_id: int,
    children: Sequence[ContextSummary],
    mode: str,
    backend: Backend,
    n: int = 10,
    child_snr: Mapping[int, float] | None = None,
    seed: int = 0,
) -> ContextSummary:
    chosen = select_child_inputs(children, mode, n, child_snr)
    try:
        raw = backend.generate(_request([c.body for c in chosen], seed))
    except BackendError as exc:
        raise BackendError(f"{level} {node_id}: {exc}", retryable=exc.retryable, attempts=exc.attempts) from exc
    return _finish(level, node_id, mode, raw, [c.id for c in chosen])


def summarize_story(story_id, children, mode, backend, n=10, child_snr=None, seed=0) -> ContextSummary:
    return summarize_parent("story", story_id, children, mode, backend, n, child_snr, seed)


def summarize_theme(theme_id, children, mode, backend, n=10, child_snr=None, seed=0) -> ContextSummary:
    return summarize_parent("theme", theme_id, children, mode, backend, n, child_snr, seed)


def build_context_tree(
    points: Mapping[str, DataPoint],
    assignments: Sequence[HierarchyAssignment],
    index: HierarchyIndex,
    mode: str,
    backend: Backend,
    scores: Mapping[str, SnrScore] | None = None,
    cluster_cap: int = 20,
    child_cap: int = 10,
    seed: int = 0,
) -> dict[tuple[str, int], ContextSummary]:
    """One summary per cluster, story and theme present in ``assignments``.

    Each level is generated as one batch through ``generate_many``; levels
    run in order because each consumes the previous one.
    """
    _check_mode(mode)
    cluster_pts: dict[int, list[str]] = defaultdict(list)
    story_pts: dict[int, list[str]] = defaultdict(list)
    theme_pts: dict[int, list[str]] = defaultdict(list)
    for a in sorted(assignments, key=lambda a: a.point_id):
        if a.irrelevant:
            continue
        cluster_pts[a.cluster_id].append(a.point_id)
        story_pts[a.story_id].append(a.point_id)
        theme_pts[a.theme_id].append(a.point_id)

    out: dict[tuple[str, int], ContextSummary] = {}

    cluster_ids = sorted(cluster_pts)
    selections = [
        select_cluster_inputs([points[p] for p in cluster_pts[c]], mode, cluster_cap, scores)
        for c in cluster_ids
    ]
    raws = _run(backend, [_request([p.text for p in sel], seed) for sel in selections], "cluster", cluster_ids)
    for c, sel, raw in zip(cluster_ids, selections, raws):
        out[("cluster", c)] = _finish("cluster", c, mode, raw, [p.id for p in sel])

    for level, child_level, node_pts, child_pts in (
        ("story", "cluster", story_pts, cluster_pts),
        ("theme", "story", theme_pts, story_pts),
    ):
        node_ids = sorted(node_pts)
        child_snr = None
        if mode == WEIGHTED:
            child_snr = {c: mean_snr(pts, scores) for c, pts in child_pts.items()}
        selections = []
        for node in node_ids:
            kids = [out[(child_level, c)] for c in index.children(level, node) if (child_level, c) in out]
            selections.append(select_child_inputs(kids, mode, child_cap, child_snr))
        raws = _run(backend, [_request([k.body for k in sel], seed) for sel in selections], level, node_ids)
        for node, sel, raw in zip(node_ids, selections, raws):
            out[(level, node)] = _finish(level, node, mode, raw, [k.id for k in sel])
    return out


def _run(backend: Backend, requests: list[GenerationRequest], level: str, ids: list[int]) -> list[str]:
    try:
        return backend.generate_many(requests)
    except BackendError as exc:
        raise BackendError(f"{level} summaries ({len(ids)} scopes): {exc}", retryable=exc.retryable, attempts=exc.attempts) from exc
