"""Topic extraction under the three context scenarios, K-Means category-clusters and Sankey flows."""

from __future__ import annotations

from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .backends import Backend, BackendError, GenerationRequest, parse_topics
from .corpus import DataPoint
from .kmeans import kmeans
from .metrics import metric_report, silhouette
from .sos import ContextSummary

BASELINE = "baseline"
SSAS = "ssas"
WSSAS = "wssas"
SCENARIOS = (BASELINE, SSAS, WSSAS)
SCENARIO_MODE = {SSAS: "unweighted", WSSAS: "weighted"}

# scenario comparison pairs for Sankey flows: (from, to)
SANKEY_PAIRS = ((BASELINE, WSSAS), (BASELINE, SSAS), (SSAS, WSSAS))


class CategorizeError(ValueError):
    pass


@dataclass(frozen=True)
class TopicPair:
    point_id: str
    primary: str
    secondary: str | None
    scenario: str

    def __post_init__(self) -> None:
        if not self.primary:
            raise CategorizeError(f"{self.point_id}: empty primary topic")
        if self.secondary is not None and self.secondary == self.primary:
            raise CategorizeError(f"{self.point_id}: secondary topic repeats the primary")

    def to_dict(self) -> dict:
        return {"point_id": self.point_id, "scenario": self.scenario, "primary": self.primary, "secondary": self.secondary}

    @classmethod
    def from_dict(cls, d: Mapping) -> TopicPair:
        return cls(str(d["point_id"]), d["primary"], d.get("secondary"), d["scenario"])


def topic_request(point: DataPoint, scenario: str, context: ContextSummary | None, seed: int = 0) -> GenerationRequest:
    if scenario not in SCENARIOS:
        raise CategorizeError(f"unknown scenario {scenario!r}")
    if scenario == BASELINE and context is not None:
        raise CategorizeError("baseline scenario takes no context")
    if context is not None and context.mode != SCENARIO_MODE[scenario]:
        raise CategorizeError(f"{scenario} needs a {SCENARIO_MODE[scenario]} context summary")
    inputs = (point.text,) if context is None else (point.text, context.body)
    return GenerationRequest("topics", inputs, {}, seed)


def extract_topics(
    point: DataPoint,
    scenario: str,
    context: ContextSummary | None,
    backend: Backend,
    seed: int = 0,
) -> TopicPair:
    try:
        raw = backend.generate(topic_request(point, scenario, context, seed))
        primary, secondary = parse_topics(raw)
    except BackendError as exc:
        raise BackendError(f"point {point.id}: {exc}", retryable=exc.retryable, attempts=exc.attempts) from exc
    return TopicPair(point.id, primary, secondary, scenario)


def extract_all(
    points: Sequence[DataPoint],
    scenario: str,
    theme_of: Mapping[str, int],
    contexts: Mapping[int, ContextSummary],
    backend: Backend,
    seed: int = 0,
) -> list[TopicPair]:
    """Topics for every point; points without a theme context (theme -1) fall back to baseline."""
    requests = []
    for p in points:
        ctx = None
        if scenario != BASELINE:
            ctx = contexts.get(theme_of.get(p.id, -1))
        requests.append(topic_request(p, scenario, ctx, seed))
    raws = backend.generate_many(requests)
    out = []
    for p, raw in zip(points, raws):
        try:
            primary, secondary = parse_topics(raw)
        except BackendError as exc:
            raise BackendError(f"point {p.id}: {exc}") from exc
        out.append(TopicPair(p.id, primary, secondary, scenario))
    return out


@dataclass
class CategoryClustering:
    scenario: str
    k: int
    labels: dict[str, int]
    titles: list[str]
    metrics: dict[str, float | None]
    volume_pct: list[float]
    inertia: float = 0.0
    silhouette_by_k: dict[int, float] = field(default_factory=dict)
    stage: str | None = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "stage": self.stage,
            "k": self.k,
            "titles": self.titles,
            "metrics": self.metrics,
            "volume_pct": self.volume_pct,
            "inertia": self.inertia,
            "silhouette_by_k": {str(k): v for k, v in self.silhouette_by_k.items()},
            "labels": self.labels,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CategoryClustering:
        return cls(
            d["scenario"],
            int(d["k"]),
            {str(k): int(v) for k, v in d["labels"].items()},
            list(d["titles"]),
            dict(d["metrics"]),
            list(d["volume_pct"]),
            float(d.get("inertia", 0.0)),
            {int(k): v for k, v in d.get("silhouette_by_k", {}).items()},
            d.get("stage"),
        )


def _relabel_by_size(labels: np.ndarray) -> np.ndarray:
    """Category 0 is the largest; ties go to the category whose first member comes first."""
    k = int(labels.max()) + 1
    sizes = np.bincount(labels, minlength=k)
    first = [int(np.flatnonzero(labels == c)[0]) if sizes[c] else len(labels) for c in range(k)]
    order = sorted(range(k), key=lambda c: (-sizes[c], first[c]))
    remap = np.empty(k, dtype=int)
    for new, old in enumerate(order):
        remap[old] = new
    return remap[labels]


def category_clusters(
    topics: Sequence[TopicPair],
    backend: Backend,
    k_range: tuple[int, int] = (2, 10),
    seed: int = 0,
    restarts: int = 10,
) -> CategoryClustering:
    """K-Means over primary-topic embeddings; k chosen by maximal silhouette (ties -> smaller k)."""
    k_min, k_max = k_range
    if k_min < 2 or k_max < k_min:
        raise CategorizeError(f"invalid k_range {k_range}")
    ordered = sorted(topics, key=lambda t: t.point_id)
    if not ordered:
        raise CategorizeError("no topics to cluster")
    scenario = ordered[0].scenario
    x = backend.embed([t.primary for t in ordered])
    n = x.shape[0]
    distinct = np.unique(x, axis=0).shape[0]
    if distinct < k_min:
        raise CategorizeError(f"degenerate input: {distinct} distinct topic embeddings, need >= {k_min}")
    k_hi = min(k_max, n - 1, distinct)
    if k_hi < k_min:
        raise CategorizeError(f"degenerate input: {n} points cannot support k >= {k_min}")

    best = None
    scores: dict[int, float] = {}
    for k in range(k_min, k_hi + 1):
        res = kmeans(x, k, seed, restarts=restarts)
        if np.unique(res.labels).size < k:
            continue
        s = silhouette(x, res.labels)
        scores[k] = s
        if best is None or s > best[0]:
            best = (s, k, res)
    if best is None:
        raise CategorizeError("degenerate input: no k in range yields distinct non-empty clusters")
    _, k, res = best
    labels = _relabel_by_size(res.labels)

    members: list[list[str]] = [[] for _ in range(k)]
    for t, c in zip(ordered, labels):
        members[c].append(t.primary)
    raws = backend.generate_many([GenerationRequest("title", tuple(m), {}, seed) for m in members])
    titles = [r.strip().splitlines()[0].strip() if r.strip() else f"category {i}" for i, r in enumerate(raws)]
    sizes = np.bincount(labels, minlength=k)
    return CategoryClustering(
        scenario=scenario,
        k=k,
        labels={t.point_id: int(c) for t, c in zip(ordered, labels)},
        titles=titles,
        metrics=metric_report(x, labels),
        volume_pct=[100.0 * int(s) / n for s in sizes],
        inertia=res.inertia,
        silhouette_by_k=scores,
    )


def sankey(labels_a: Mapping[str, object], labels_b: Mapping[str, object]) -> dict[tuple, int]:
    """Transition counts between two labelings of the same points."""
    a_keys, b_keys = set(labels_a), set(labels_b)
    if a_keys != b_keys:
        missing = sorted(a_keys ^ b_keys)
        raise CategorizeError(f"point id sets differ; unmatched ids: {missing[:20]}")
    return dict(sorted(Counter((labels_a[p], labels_b[p]) for p in sorted(a_keys)).items()))


def sankey_export(
    scenario_a: str,
    scenario_b: str,
    flows: Mapping[tuple, int],
    titles_a: Sequence[str] | None = None,
    titles_b: Sequence[str] | None = None,
) -> dict:
    out = {
        "scenario_a": scenario_a,
        "scenario_b": scenario_b,
        "flows": [{"from": a, "to": b, "count": c} for (a, b), c in flows.items()],
    }
    if titles_a is not None:
        out["titles_a"] = list(titles_a)
    if titles_b is not None:
        out["titles_b"] = list(titles_b)
    return out
