"""Signal-to-noise scoring, weighted amplitude and the two-stage noise filter."""

from __future__ import annotations

from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .backends import cosine
from .corpus import DataPoint
from .hierarchy import (
    STAGE_NO_IRRELEVANT,
    STAGE_NO_OUTLIERS,
    HierarchyAssignment,
    HierarchyError,
    HierarchyIndex,
)
from .text import content_tokens


class SnrError(ValueError):
    pass


@dataclass(frozen=True)
class KeywordProfile:
    cluster_id: int | None
    keywords: tuple[tuple[str, float], ...]

    @property
    def total_weight(self) -> float:
        return sum(w for _, w in self.keywords)

    def to_dict(self) -> dict:
        return {"cluster_id": self.cluster_id, "keywords": [[t, w] for t, w in self.keywords]}


@dataclass(frozen=True)
class SnrScore:
    s_theme: float
    s_story: float
    s_cluster: float
    total: float

    @classmethod
    def from_components(cls, s_theme: float, s_story: float, s_cluster: float) -> SnrScore:
        return cls(s_theme, s_story, s_cluster, s_theme + s_story + s_cluster)

    def to_dict(self, point_id: str) -> dict:
        return {
            "point_id": point_id,
            "s_theme": self.s_theme,
            "s_story": self.s_story,
            "s_cluster": self.s_cluster,
            "total": self.total,
        }


def profile_from_frequencies(
    freqs: Mapping[str, int | float], m: int = 10, cluster_id: int | None = None
) -> KeywordProfile:
    """Top-``m`` terms by frequency (ties lexicographic), weights divided by the top frequency.

    Normalization is done in exact rational arithmetic, so scaling every
    frequency by the same constant yields bit-identical weights.
    """
    if m < 1:
        raise SnrError("m must be >= 1")
    ranked = sorted(((t, f) for t, f in freqs.items() if f > 0), key=lambda kv: (-kv[1], kv[0]))[:m]
    if not ranked:
        return KeywordProfile(cluster_id, ())
    top = Fraction(ranked[0][1])
    return KeywordProfile(cluster_id, tuple((t, float(Fraction(f) / top)) for t, f in ranked))


def keyword_profile(
    members: Sequence[DataPoint],
    stopwords: frozenset[str],
    m: int = 10,
    cluster_id: int | None = None,
) -> KeywordProfile:
    if not members:
        raise SnrError("keyword profile needs at least one member")
    freqs: Counter[str] = Counter()
    for p in members:
        freqs.update(content_tokens(p.text, stopwords))
    return profile_from_frequencies(freqs, m, cluster_id)


def amplitude(point: DataPoint, profile: KeywordProfile, stopwords: frozenset[str]) -> float:
    """Share of profile weight carried by terms present in the point."""
    total = profile.total_weight
    if total == 0:
        return 0.0
    present = set(content_tokens(point.text, stopwords))
    hit = sum(w for t, w in profile.keywords if t in present)
    return hit / total


def snr(
    embedding: np.ndarray,
    index: HierarchyIndex,
    assignment: HierarchyAssignment,
    amp: float,
) -> SnrScore:
    """Amplitude-weighted, zero-clamped cosine to the theme, story and cluster centroids."""
    if assignment.irrelevant:
        raise SnrError("SNR undefined for irrelevant data")
    s_theme = amp * max(0.0, cosine(embedding, index.centroid("theme", assignment.theme_id)))
    s_story = amp * max(0.0, cosine(embedding, index.centroid("story", assignment.story_id)))
    s_cluster = amp * max(0.0, cosine(embedding, index.centroid("cluster", assignment.cluster_id)))
    return SnrScore.from_components(s_theme, s_story, s_cluster)


def score_all(
    points: Mapping[str, DataPoint],
    embeddings: Mapping[str, np.ndarray],
    assignments: Sequence[HierarchyAssignment],
    index: HierarchyIndex,
    stopwords: frozenset[str],
    m: int = 10,
) -> tuple[dict[str, SnrScore], dict[int, KeywordProfile]]:
    """Score every relevant point against its own cluster's keyword profile."""
    by_cluster: dict[int, list[DataPoint]] = defaultdict(list)
    for a in sorted(assignments, key=lambda a: a.point_id):
        if not a.irrelevant:
            by_cluster[a.cluster_id].append(points[a.point_id])
    profiles = {
        c: keyword_profile(members, stopwords, m, c) for c, members in sorted(by_cluster.items())
    }
    scores = {}
    for a in sorted(assignments, key=lambda a: a.point_id):
        if a.irrelevant:
            continue
        amp = amplitude(points[a.point_id], profiles[a.cluster_id], stopwords)
        scores[a.point_id] = snr(embeddings[a.point_id], index, a, amp)
    return scores, profiles


def rank_order(members: Iterable[str], scores: Mapping[str, SnrScore]) -> list[str]:
    """Descending SNR total, ties by ascending point id."""
    members = list(members)
    missing = [m for m in members if m not in scores]
    if missing:
        raise SnrError(f"no SNR score for {missing[:5]}")
    return sorted(members, key=lambda pid: (-scores[pid].total, pid))


def mean_snr(point_ids: Iterable[str], scores: Mapping[str, SnrScore]) -> float:
    ids = sorted(point_ids)
    if not ids:
        return 0.0
    return sum(scores[pid].total for pid in ids) / len(ids)


def filter_irrelevant(assignments: Sequence[HierarchyAssignment]) -> list[HierarchyAssignment]:
    return [a for a in assignments if not a.irrelevant]


@dataclass
class FilterConfig:
    min_cluster_size: int = 5
    p_out: float = 25.0
    min_story_clusters: int = 2

    def violations(self) -> list[str]:
        out = []
        if self.min_cluster_size < 1:
            out.append("filter.min_cluster_size must be >= 1")
        if not 0.0 <= self.p_out <= 100.0:
            out.append("filter.p_out must lie in [0, 100]")
        if self.min_story_clusters < 1:
            out.append("filter.min_story_clusters must be >= 1")
        return out


@dataclass
class PruningReport:
    removed_clusters: list[int] = field(default_factory=list)
    removed_stories: list[int] = field(default_factory=list)
    removed_themes: list[int] = field(default_factory=list)
    removed_points: int = 0

    def to_dict(self) -> dict:
        return {
            "removed_clusters": len(self.removed_clusters),
            "removed_stories": len(self.removed_stories),
            "removed_themes": len(self.removed_themes),
            "removed_points": self.removed_points,
            "removed_cluster_ids": self.removed_clusters,
            "removed_story_ids": self.removed_stories,
            "removed_theme_ids": self.removed_themes,
        }


@dataclass
class OutlierResult:
    assignments: list[HierarchyAssignment]
    index: HierarchyIndex | None
    report: PruningReport


def _percentile(values: Sequence[float], p: float) -> float:
    return float(np.percentile(np.sort(np.asarray(values, dtype=float)), p))


def filter_outliers(
    assignments: Sequence[HierarchyAssignment],
    scores: Mapping[str, SnrScore],
    config: FilterConfig | None = None,
    index: HierarchyIndex | None = None,
) -> OutlierResult:
    """Prune small or low-signal clusters, then thin stories, then empty themes.

    Within each story, a cluster survives when it has at least
    ``min_cluster_size`` points and its mean SNR is not below the ``p_out``-th
    percentile of mean SNRs among the story's size-qualified clusters. A story
    survives with at least ``min_story_clusters`` surviving clusters.

    The percentile is a property of the no-irrelevant population, so an index
    already at the no-outlier stage is returned unchanged.
    """
    config = config or FilterConfig()
    if index is not None and index.stage == STAGE_NO_OUTLIERS:
        return OutlierResult(list(assignments), index, PruningReport())
    if any(a.irrelevant for a in assignments):
        raise HierarchyError("filter_outliers requires irrelevant points to be removed first")

    members: dict[int, list[str]] = defaultdict(list)
    story_clusters: dict[int, set[int]] = defaultdict(set)
    theme_of_story: dict[int, int] = {}
    for a in sorted(assignments, key=lambda a: a.point_id):
        members[a.cluster_id].append(a.point_id)
        story_clusters[a.story_id].add(a.cluster_id)
        theme_of_story[a.story_id] = a.theme_id

    keep_clusters: set[int] = set()
    for story in sorted(story_clusters):
        clusters = sorted(story_clusters[story])
        sized = [c for c in clusters if len(members[c]) >= config.min_cluster_size]
        if not sized:
            continue
        means = {c: mean_snr(members[c], scores) for c in sized}
        cut = _percentile([means[c] for c in sized], config.p_out)
        survivors = [c for c in sized if means[c] >= cut]
        if len(survivors) >= config.min_story_clusters:
            keep_clusters.update(survivors)

    report = PruningReport()
    report.removed_clusters = sorted(set(members) - keep_clusters)
    kept = [a for a in assignments if a.cluster_id in keep_clusters]
    kept_stories = {a.story_id for a in kept}
    kept_themes = {a.theme_id for a in kept}
    report.removed_stories = sorted(set(story_clusters) - kept_stories)
    report.removed_themes = sorted(set(theme_of_story.values()) - kept_themes)
    report.removed_points = len(assignments) - len(kept)

    new_index = index.prune(keep_clusters, STAGE_NO_OUTLIERS) if index is not None else None
    return OutlierResult(kept, new_index, report)


def no_irrelevant_index(index: HierarchyIndex) -> HierarchyIndex:
    """Theme -1 never enters the index, so only the stage label changes."""
    return index.prune(index.clusters, STAGE_NO_IRRELEVANT)
