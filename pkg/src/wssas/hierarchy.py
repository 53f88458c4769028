"""Theme / Story / Cluster classification over datapoint embeddings.

Construction is greedy leader clustering in ascending point-id order, so the
result depends only on the corpus, the embeddings and the thresholds:

1. points -> clusters (``tau_cluster``), followed by one nearest-centroid
   refinement pass with frozen centroids;
2. cluster centroids -> stories (``tau_story``);
3. story centroids -> themes (``tau_theme``);
4. points whose cosine to their theme centroid is below ``tau_irr`` (and all
   zero-embedding points) move to theme -1.

Final ids at every level are ordered by descending member count, ties by
founding order, so theme 0 is always the largest.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus

log = logging.getLogger(__name__)

IRRELEVANT = -1

STAGE_ALL = "all"
STAGE_NO_IRRELEVANT = "no_irrelevant"
STAGE_NO_OUTLIERS = "no_irrelevant_no_outliers"
STAGES = (STAGE_ALL, STAGE_NO_IRRELEVANT, STAGE_NO_OUTLIERS)

LEVELS = ("cluster", "story", "theme")


class HierarchyError(ValueError):
    pass


@dataclass
class HierarchyConfig:
    tau_cluster: float = 0.75
    tau_story: float = 0.50
    tau_theme: float = 0.35
    tau_irr: float = 0.10

    def violations(self) -> list[str]:
        out = []
        for name in ("tau_cluster", "tau_story", "tau_theme", "tau_irr"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                out.append(f"hierarchy.{name}={v} must lie in (0, 1)")
        if not self.tau_cluster > self.tau_story > self.tau_theme > self.tau_irr:
            out.append("hierarchy thresholds must satisfy tau_cluster > tau_story > tau_theme > tau_irr")
        return out


@dataclass(frozen=True)
class HierarchyAssignment:
    point_id: str
    theme_id: int
    story_id: int | None = None
    cluster_id: int | None = None

    def __post_init__(self) -> None:
        if self.theme_id < IRRELEVANT:
            raise HierarchyError(f"{self.point_id}: theme_id must be >= -1")
        if self.theme_id == IRRELEVANT:
            if self.story_id is not None or self.cluster_id is not None:
                raise HierarchyError(f"{self.point_id}: irrelevant points carry no story or cluster")
        elif self.story_id is None or self.cluster_id is None:
            raise HierarchyError(f"{self.point_id}: themed points need a story and a cluster")

    @property
    def irrelevant(self) -> bool:
        return self.theme_id == IRRELEVANT

    def to_dict(self) -> dict:
        return {
            "point_id": self.point_id,
            "theme_id": self.theme_id,
            "story_id": self.story_id,
            "cluster_id": self.cluster_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> HierarchyAssignment:
        return cls(str(d["point_id"]), int(d["theme_id"]), d.get("story_id"), d.get("cluster_id"))


@dataclass
class HierarchyIndex:
    """Tree membership plus a centroid and member count for every node."""

    stage: str
    cluster_story: dict[int, int]
    story_theme: dict[int, int]
    centroids: dict[tuple[str, int], np.ndarray]
    counts: dict[tuple[str, int], int]
    warnings: list[str] = field(default_factory=list)

    @property
    def clusters(self) -> list[int]:
        return sorted(self.cluster_story)

    @property
    def stories(self) -> list[int]:
        return sorted(self.story_theme)

    @property
    def themes(self) -> list[int]:
        return sorted(set(self.story_theme.values()))

    def centroid(self, level: str, node_id: int) -> np.ndarray:
        return self.centroids[(level, node_id)]

    def theme_of_cluster(self, cluster_id: int) -> int:
        return self.story_theme[self.cluster_story[cluster_id]]

    def children(self, level: str, node_id: int) -> list[int]:
        if level == "story":
            return sorted(c for c, s in self.cluster_story.items() if s == node_id)
        if level == "theme":
            return sorted(s for s, t in self.story_theme.items() if t == node_id)
        raise HierarchyError(f"level {level!r} has no children")

    def check_tree(self) -> None:
        for c, s in self.cluster_story.items():
            if s not in self.story_theme:
                raise HierarchyError(f"cluster {c} maps to unknown story {s}")
        for key in self.centroids:
            level, node = key
            known = {"cluster": self.cluster_story, "story": self.story_theme}.get(level)
            if known is not None and node not in known:
                raise HierarchyError(f"centroid for unknown {level} {node}")

    def prune(self, keep_clusters: Iterable[int], stage: str) -> HierarchyIndex:
        """Sub-index keeping only ``keep_clusters``; parent centroids are re-weighted."""
        keep = sorted(set(keep_clusters))
        cluster_story = {c: self.cluster_story[c] for c in keep}
        story_theme = {s: self.story_theme[s] for s in sorted(set(cluster_story.values()))}
        centroids: dict[tuple[str, int], np.ndarray] = {}
        counts: dict[tuple[str, int], int] = {}
        for c in keep:
            centroids[("cluster", c)] = self.centroids[("cluster", c)]
            counts[("cluster", c)] = self.counts[("cluster", c)]
        for level, parent_of, child_level in (
            ("story", cluster_story, "cluster"),
            ("theme", story_theme, "story"),
        ):
            sums: dict[int, np.ndarray] = {}
            for child in sorted(parent_of):
                parent = parent_of[child]
                n = counts[(child_level, child)]
                contrib = centroids[(child_level, child)] * n
                sums[parent] = sums[parent] + contrib if parent in sums else contrib.copy()
                counts[(level, parent)] = counts.get((level, parent), 0) + n
            for parent, total in sums.items():
                centroids[(level, parent)] = total / counts[(level, parent)]
        return HierarchyIndex(stage, cluster_story, story_theme, centroids, counts, list(self.warnings))

    def to_dict(self) -> dict:
        def nodes(level: str, ids: list[int], parent: Mapping[int, int] | None):
            out = []
            for i in ids:
                rec = {"id": i, "count": self.counts[(level, i)]}
                if parent is not None:
                    rec["parent"] = parent[i]
                rec["centroid"] = [float(x) for x in self.centroids[(level, i)]]
                out.append(rec)
            return out

        return {
            "stage": self.stage,
            "clusters": nodes("cluster", self.clusters, self.cluster_story),
            "stories": nodes("story", self.stories, self.story_theme),
            "themes": nodes("theme", self.themes, None),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> HierarchyIndex:
        centroids, counts = {}, {}
        cluster_story, story_theme = {}, {}
        for level, key, parent in (
            ("cluster", "clusters", cluster_story),
            ("story", "stories", story_theme),
            ("theme", "themes", None),
        ):
            for rec in d[key]:
                i = int(rec["id"])
                centroids[(level, i)] = np.asarray(rec["centroid"], dtype=float)
                counts[(level, i)] = int(rec["count"])
                if parent is not None:
                    parent[i] = int(rec["parent"])
        return cls(d["stage"], cluster_story, story_theme, centroids, counts, list(d.get("warnings", [])))


@dataclass(frozen=True)
class StageStats:
    themes: int
    stories: int
    clusters: int
    points: int

    def to_dict(self) -> dict:
        return {"themes": self.themes, "stories": self.stories, "clusters": self.clusters, "points": self.points}


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def _leader(directions: np.ndarray, weights: np.ndarray, tau: float) -> list[int]:
    """Greedy leader clustering in row order.

    ``directions`` are unit rows; ``weights`` are the vectors accumulated into
    a group's running sum when a row joins it.
    """
    m, dim = directions.shape
    sums = np.zeros((m, dim))
    labels: list[int] = []
    k = 0
    for j in range(m):
        if k:
            norms = np.linalg.norm(sums[:k], axis=1)
            sims = (sums[:k] @ directions[j]) / np.where(norms > 0, norms, 1.0)
            hits = np.flatnonzero(sims >= tau)
            if hits.size:
                g = int(hits[0])
                sums[g] += weights[j]
                labels.append(g)
                continue
        sums[k] = weights[j]
        labels.append(k)
        k += 1
    return labels


def _group_sums(labels: Sequence[int], vectors: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    sums = np.zeros((k, vectors.shape[1]))
    counts = np.zeros(k, dtype=int)
    for row, g in enumerate(labels):
        sums[g] += vectors[row]
        counts[g] += 1
    return sums, counts


def _compact(labels: Sequence[int]) -> list[int]:
    """Relabel to 0..k-1 preserving first-appearance (founding) order of survivors."""
    order: dict[int, int] = {}
    for g in sorted(set(labels)):
        order[g] = len(order)
    return [order[g] for g in labels]


def _rank_ids(members: Mapping[int, int]) -> dict[int, int]:
    """Map founding label -> final id by descending member count, ties by founding order."""
    ranked = sorted(members, key=lambda g: (-members[g], g))
    return {g: i for i, g in enumerate(ranked)}


def build_hierarchy(
    corpus: Corpus,
    embeddings: np.ndarray,
    config: HierarchyConfig | None = None,
) -> tuple[list[HierarchyAssignment], HierarchyIndex]:
    config = config or HierarchyConfig()
    problems = config.violations()
    if problems:
        raise HierarchyError("; ".join(problems))
    emb = np.asarray(embeddings, dtype=float)
    n = len(corpus)
    if emb.ndim != 2 or emb.shape[0] != n:
        raise HierarchyError(f"embedding count {emb.shape[0] if emb.ndim else 0} != corpus size {n}")
    ids = [p.id for p in corpus]

    warnings = []
    norms = np.linalg.norm(emb, axis=1)
    live = np.flatnonzero(norms > 0)
    if n and (n - live.size) * 2 > n:
        msg = f"{n - live.size} of {n} embeddings are all-zero"
        log.warning(msg)
        warnings.append(msg)

    if live.size == 0:
        assignments = [HierarchyAssignment(pid, IRRELEVANT) for pid in ids]
        return assignments, HierarchyIndex(STAGE_ALL, {}, {}, {}, {}, warnings)

    vecs = emb[live]
    units = _unit_rows(vecs)

    # points -> clusters, then one refinement pass against frozen centroids
    c_labels = _leader(units, vecs, config.tau_cluster)
    c_sums, _ = _group_sums(c_labels, vecs, max(c_labels) + 1)
    c_dirs = _unit_rows(c_sums)
    c_labels = _compact(np.argmax(units @ c_dirs.T, axis=1).tolist())
    k_c = max(c_labels) + 1
    c_sums, c_counts = _group_sums(c_labels, vecs, k_c)

    # clusters -> stories -> themes
    s_of_c = _leader(_unit_rows(c_sums), c_sums, config.tau_story)
    k_s = max(s_of_c) + 1
    s_sums, _ = _group_sums(s_of_c, c_sums, k_s)
    t_of_s = _leader(_unit_rows(s_sums), s_sums, config.tau_theme)
    k_t = max(t_of_s) + 1
    t_sums, _ = _group_sums(t_of_s, s_sums, k_t)
    t_dirs = _unit_rows(t_sums)

    point_theme = [t_of_s[s_of_c[c]] for c in c_labels]
    sims = np.einsum("ij,ij->i", units, t_dirs[point_theme])
    relevant = sims >= config.tau_irr

    cluster_members: dict[int, int] = defaultdict(int)
    story_members: dict[int, int] = defaultdict(int)
    theme_members: dict[int, int] = defaultdict(int)
    for row, c in enumerate(c_labels):
        if relevant[row]:
            cluster_members[c] += 1
            story_members[s_of_c[c]] += 1
            theme_members[t_of_s[s_of_c[c]]] += 1
    c_id, s_id, t_id = _rank_ids(cluster_members), _rank_ids(story_members), _rank_ids(theme_members)

    by_row = {int(r): i for i, r in enumerate(live)}
    assignments = []
    for row, pid in enumerate(ids):
        i = by_row.get(row)
        if i is None or not relevant[i]:
            assignments.append(HierarchyAssignment(pid, IRRELEVANT))
            continue
        c = c_labels[i]
        s = s_of_c[c]
        assignments.append(HierarchyAssignment(pid, t_id[t_of_s[s]], s_id[s], c_id[c]))

    index = index_from_assignments(assignments, dict(zip(ids, emb)), STAGE_ALL)
    index.warnings = warnings
    return assignments, index


def index_from_assignments(
    assignments: Sequence[HierarchyAssignment],
    embeddings: Mapping[str, np.ndarray],
    stage: str,
) -> HierarchyIndex:
    """Recompute the index (membership, centroids, counts) from member embeddings.

    Sums accumulate in ascending point-id order.
    """
    cluster_story: dict[int, int] = {}
    story_theme: dict[int, int] = {}
    sums: dict[tuple[str, int], np.ndarray] = {}
    counts: dict[tuple[str, int], int] = defaultdict(int)
    for a in sorted(assignments, key=lambda a: a.point_id):
        if a.irrelevant:
            continue
        if cluster_story.setdefault(a.cluster_id, a.story_id) != a.story_id:
            raise HierarchyError(f"cluster {a.cluster_id} appears under two stories")
        if story_theme.setdefault(a.story_id, a.theme_id) != a.theme_id:
            raise HierarchyError(f"story {a.story_id} appears under two themes")
        vec = np.asarray(embeddings[a.point_id], dtype=float)
        for key in (("cluster", a.cluster_id), ("story", a.story_id), ("theme", a.theme_id)):
            sums[key] = sums[key] + vec if key in sums else vec.copy()
            counts[key] += 1
    centroids = {key: total / counts[key] for key, total in sums.items()}
    return HierarchyIndex(stage, cluster_story, story_theme, centroids, dict(counts))


def check_consistent(assignments: Iterable[HierarchyAssignment], index: HierarchyIndex) -> None:
    for a in assignments:
        if a.irrelevant:
            continue
        if a.cluster_id not in index.cluster_story:
            raise HierarchyError(f"{a.point_id}: cluster {a.cluster_id} not in index")
        if index.cluster_story[a.cluster_id] != a.story_id:
            raise HierarchyError(f"{a.point_id}: cluster {a.cluster_id} is not in story {a.story_id}")
        if index.story_theme.get(a.story_id) != a.theme_id:
            raise HierarchyError(f"{a.point_id}: story {a.story_id} is not in theme {a.theme_id}")


def hierarchy_stats(assignments: Sequence[HierarchyAssignment], index: HierarchyIndex) -> StageStats:
    check_consistent(assignments, index)
    themes = {a.theme_id for a in assignments}
    stories = {a.story_id for a in assignments if not a.irrelevant}
    clusters = {a.cluster_id for a in assignments if not a.irrelevant}
    has_irrelevant = IRRELEVANT in themes
    return StageStats(
        themes=len(themes),
        stories=len(stories) + (1 if has_irrelevant else 0),
        clusters=len(clusters),
        points=len(assignments),
    )


def theme_breakdown(assignments: Sequence[HierarchyAssignment]) -> list[dict]:
    """Per-theme story / cluster / point counts, theme -1 first."""
    rows: dict[int, dict] = {}
    for a in assignments:
        row = rows.setdefault(a.theme_id, {"stories": set(), "clusters": set(), "points": 0})
        row["points"] += 1
        if not a.irrelevant:
            row["stories"].add(a.story_id)
            row["clusters"].add(a.cluster_id)
    out = []
    for theme in sorted(rows):
        row = rows[theme]
        stories = 1 if theme == IRRELEVANT else len(row["stories"])
        out.append({"theme": theme, "stories": stories, "clusters": len(row["clusters"]), "points": row["points"]})
    return out
