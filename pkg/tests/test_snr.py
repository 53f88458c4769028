import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wssas.corpus import DataPoint
from wssas.hierarchy import (
    STAGE_ALL,
    STAGE_NO_IRRELEVANT,
    STAGE_NO_OUTLIERS,
    HierarchyAssignment,
    HierarchyError,
    HierarchyIndex,
    build_hierarchy,
    hierarchy_stats,
    index_from_assignments,
)
from wssas.snr import (
    FilterConfig,
    KeywordProfile,
    SnrError,
    SnrScore,
    amplitude,
    filter_irrelevant,
    filter_outliers,
    keyword_profile,
    no_irrelevant_index,
    profile_from_frequencies,
    rank_order,
    score_all,
    snr,
)
from wssas.synthetic import pipeline_corpus

STOP = frozenset({"the", "was", "it"})


def pt(text, i=0):
    return DataPoint(f"p{i:03d}", text, "e", date(2021, 1, 1))



def with_cos(c):
    """Unit vector at cosine ``c`` to e0 in the (e0, e1) plane."""
    return np.array([c, math.sqrt(1 - c * c), 0.0, 0.0])


# keyword profile


def test_profile_example_normalizes_by_top_frequency():
    prof = profile_from_frequencies({"pizza": 5, "service": 3, "cold": 2}, m=3)
    assert prof.keywords == (("pizza", 1.0), ("service", 0.6), ("cold", 0.4))


def test_profile_from_members_counts_tokens():
    members = [pt("pizza pizza service"), pt("pizza cold the"), pt("pizza service pizza cold")]
    prof = keyword_profile(members, STOP, m=3)
    assert prof.keywords == (("pizza", 1.0), ("cold", 0.4), ("service", 0.4))


def test_single_term_and_stopword_only_profiles():
    assert keyword_profile([pt("x")], STOP).keywords == (("x", 1.0),)
    assert keyword_profile([pt("the was it")], STOP).keywords == ()


def test_profile_truncates_to_m_with_lexicographic_ties():
    prof = profile_from_frequencies({"d": 1, "c": 1, "b": 1, "a": 2}, m=3)
    assert [t for t, _ in prof.keywords] == ["a", "b", "c"]
    with pytest.raises(SnrError):
        profile_from_frequencies({"a": 1}, m=0)


# amplitude


PROFILE = KeywordProfile(0, (("pizza", 1.0), ("service", 0.6), ("cold", 0.4)))


def test_amplitude_examples():
    assert amplitude(pt("cold pizza again"), PROFILE, STOP) == pytest.approx(0.7, abs=1e-12)
    assert amplitude(pt("pizza service cold"), PROFILE, STOP) == 1.0
    assert amplitude(pt("nothing relevant"), PROFILE, STOP) == 0.0
    assert amplitude(pt("pizza"), KeywordProfile(0, ()), STOP) == 0.0


@settings(max_examples=80, deadline=None)
@given(
    st.dictionaries(st.sampled_from("abcdefghij"), st.integers(1, 50), min_size=1),
    st.integers(1, 1000),
    st.lists(st.sampled_from("abcdefghij"), max_size=6),
)
def test_scaling_frequencies_leaves_profile_and_amplitude_unchanged(freqs, c, doc):
    base = profile_from_frequencies(freqs, m=5)
    scaled = profile_from_frequencies({t: f * c for t, f in freqs.items()}, m=5)
    assert base == scaled
    assert amplitude(pt(" ".join(doc)), base, STOP) == amplitude(pt(" ".join(doc)), scaled, STOP)
    assert max(w for _, w in base.keywords) == 1.0


# snr


def _index(theme, story, cluster):
    return HierarchyIndex(
        STAGE_ALL,
        {0: 0},
        {0: 0},
        {("theme", 0): theme, ("story", 0): story, ("cluster", 0): cluster},
        {("theme", 0): 1, ("story", 0): 1, ("cluster", 0): 1},
    )


def test_snr_example_components_and_total():
    e = np.array([1.0, 0, 0, 0])
    idx = _index(with_cos(0.8), with_cos(0.9), with_cos(0.95))
    s = snr(e, idx, HierarchyAssignment("p", 0, 0, 0), 0.7)
    assert (s.s_theme, s.s_story, s.s_cluster) == pytest.approx((0.56, 0.63, 0.665), abs=1e-12)
    assert s.total == pytest.approx(1.855, abs=1e-12)


def test_snr_extremes():
    e = np.array([1.0, 0, 0, 0])
    idx = _index(e, e, e)
    a = HierarchyAssignment("p", 0, 0, 0)
    assert snr(e, idx, a, 1.0).total == pytest.approx(3.0)
    assert snr(e, idx, a, 0.0).total == 0.0


def test_negative_cosine_clamps_to_zero():
    e = np.array([1.0, 0, 0, 0])
    s = snr(e, _index(-e, e, e), HierarchyAssignment("p", 0, 0, 0), 1.0)
    assert s.s_theme == 0.0


def test_snr_irrelevant_is_an_error():
    with pytest.raises(SnrError, match="irrelevant"):
        snr(np.ones(4), _index(*[np.ones(4)] * 3), HierarchyAssignment("p", -1), 1.0)


# rank order


def _scores(totals):
    return {k: SnrScore.from_components(v, 0.0, 0.0) for k, v in totals.items()}


def test_rank_order_examples():
    assert rank_order(["a", "b", "c"], _scores({"a": 1.2, "b": 2.0, "c": 1.2})) == ["b", "a", "c"]
    assert rank_order(["c", "a", "b"], _scores({"a": 1, "b": 1, "c": 1})) == ["a", "b", "c"]
    assert rank_order(["z"], _scores({"z": 0.3})) == ["z"]
    with pytest.raises(SnrError):
        rank_order(["q"], {})


# filters


def test_filter_irrelevant_examples():
    a = [HierarchyAssignment(f"p{i}", -1) if i in (1, 3) else HierarchyAssignment(f"p{i}", 0, 0, 0) for i in range(5)]
    once = filter_irrelevant(a)
    assert len(once) == 3
    assert filter_irrelevant(once) == once
    clean = [HierarchyAssignment("x", 0, 0, 0)]
    assert filter_irrelevant(clean) == clean


def _story(sizes, means, story=0, theme=0, first_cluster=0, prefix="q"):
    assigns, scores = [], {}
    for k, (n, mean) in enumerate(zip(sizes, means)):
        c = first_cluster + k
        for j in range(n):
            pid = f"{prefix}{c:03d}_{j:03d}"
            assigns.append(HierarchyAssignment(pid, theme, story, c))
            scores[pid] = SnrScore.from_components(mean, 0.0, 0.0)
    return assigns, scores


def test_small_clusters_are_pruned():
    assigns, scores = _story([1, 1, 50], [1.0, 1.0, 1.0])
    result = filter_outliers(assigns, scores, FilterConfig(min_story_clusters=1))
    assert {a.cluster_id for a in result.assignments} == {2}
    assert result.report.removed_clusters == [0, 1]
    assert result.report.removed_points == 2


def test_story_with_one_surviving_cluster_is_pruned_by_default():
    assigns, scores = _story([1, 1, 50], [1.0, 1.0, 1.0])
    result = filter_outliers(assigns, scores)
    assert result.assignments == []
    assert result.report.removed_stories == [0] and result.report.removed_themes == [0]


def test_all_clusters_qualifying_is_identity():
    assigns, scores = _story([6, 7, 8], [1.0, 1.0, 1.0])
    assert filter_outliers(assigns, scores).assignments == assigns


def test_low_signal_cluster_is_pruned():
    # means [0.5, 1, 2, 3]: 25th percentile is 0.875, so only the first falls below
    assigns, scores = _story([5, 5, 5, 5], [0.5, 1.0, 2.0, 3.0])
    result = filter_outliers(assigns, scores)
    assert result.report.removed_clusters == [0]


def test_filter_outliers_requires_irrelevant_removed():
    with pytest.raises(HierarchyError):
        filter_outliers([HierarchyAssignment("x", -1)], {})


def _pipeline(seed=0, n=120):
    from wssas.backends import StubBackend

    stub = StubBackend()
    corpus = pipeline_corpus(n, seed)
    emb = stub.embed([p.text for p in corpus])
    a, index = build_hierarchy(corpus, emb)
    points = {p.id: p for p in corpus}
    vecs = dict(zip(points, emb))
    scores, profiles = score_all(points, vecs, a, index, stub.stopwords)
    return a, index, scores, profiles, vecs


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_stage_stats_are_monotone_and_survivors_fully_assigned(seed):
    a, index, scores, _, vecs = _pipeline(seed)
    s1 = hierarchy_stats(a, index)
    a2 = filter_irrelevant(a)
    idx2 = no_irrelevant_index(index)
    s2 = hierarchy_stats(a2, idx2)
    result = filter_outliers(a2, scores, index=idx2)
    s3 = hierarchy_stats(result.assignments, result.index)
    for f in ("themes", "stories", "clusters", "points"):
        assert getattr(s1, f) >= getattr(s2, f) >= getattr(s3, f)
    assert all(x.theme_id >= 0 and x.story_id is not None and x.cluster_id is not None for x in result.assignments)
    assert result.index.stage == STAGE_NO_OUTLIERS and idx2.stage == STAGE_NO_IRRELEVANT
    # a stage index is a plain recompute from its surviving members
    rebuilt = index_from_assignments(result.assignments, vecs, STAGE_NO_OUTLIERS)
    assert rebuilt.counts == result.index.counts
    assert rebuilt.cluster_story == result.index.cluster_story
    for key, c in result.index.centroids.items():
        assert np.allclose(rebuilt.centroids[key], c, atol=1e-12, rtol=0)
    # idempotent at fixed config once the stage is reached
    again = filter_outliers(result.assignments, scores, index=result.index)
    assert again.assignments == result.assignments and again.report.removed_points == 0


@pytest.mark.parametrize("seed", [0, 3])
def test_score_identity_and_bounds(seed):
    a, _, scores, profiles, _ = _pipeline(seed, 80)
    relevant = {x.point_id for x in a if not x.irrelevant}
    assert set(scores) == relevant
    for s in scores.values():
        assert s.total == s.s_theme + s.s_story + s.s_cluster
        assert 0.0 <= s.total <= 3.0 + 1e-12
    for prof in profiles.values():
        if prof.keywords:
            assert prof.keywords[0][1] == 1.0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(1, 9), st.floats(0, 3, allow_nan=False)), min_size=1, max_size=6
    ),
    st.integers(1, 3),
    st.floats(0, 100),
)
def test_filter_outliers_partitions_and_reports_consistently(clusters, min_story, p_out):
    sizes, means = zip(*clusters)
    assigns, scores = _story(sizes, means)
    cfg = FilterConfig(min_story_clusters=min_story, p_out=p_out)
    result = filter_outliers(assigns, scores, cfg)
    kept_ids = {a.point_id for a in result.assignments}
    assert kept_ids <= {a.point_id for a in assigns}
    assert result.report.removed_points == len(assigns) - len(kept_ids)
    survivors = {a.cluster_id for a in result.assignments}
    assert survivors.isdisjoint(result.report.removed_clusters)
    assert all(sizes[c] >= cfg.min_cluster_size for c in survivors)
    assert len(survivors) == 0 or len(survivors) >= min_story
