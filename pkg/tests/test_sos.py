from datetime import date

import pytest

from wssas.backends import BackendError, StubBackend
from wssas.corpus import DataPoint
from wssas.hierarchy import build_hierarchy
from wssas.snr import SnrScore, rank_order, score_all
from wssas.sos import (
    UNWEIGHTED,
    WEIGHTED,
    ContextSummary,
    SosError,
    build_context_tree,
    select_child_inputs,
    summarize_cluster,
    summarize_story,
    summarize_theme,
)
from wssas.synthetic import pipeline_corpus


class Recorder(StubBackend):
    def __init__(self):
        super().__init__()
        self.requests = []

    def generate(self, request):
        self.requests.append(request)
        return super().generate(request)


class Failing(StubBackend):
    def generate(self, request):
        raise BackendError("boom", attempts=3)


def pts(n):
    return [DataPoint(f"d{i:02d}", f"word{i} alpha", "e", date(2021, 1, 1)) for i in range(n)]


def scores_for(ids, totals):
    return {pid: SnrScore.from_components(t, 0.0, 0.0) for pid, t in zip(ids, totals)}


def child(i, mode=WEIGHTED):
    return ContextSummary("cluster", i, mode, f"t{i}", f"body of child {i}", 1, (f"x{i}",))


def test_single_point_cluster_modes_agree():
    p = pts(1)
    sc = scores_for(["d00"], [0.1])
    w = summarize_cluster(0, p, WEIGHTED, StubBackend(), scores=sc)
    u = summarize_cluster(0, p, UNWEIGHTED, StubBackend())
    assert (w.title, w.body, w.input_ids) == (u.title, u.body, u.input_ids)
    assert w.source_count == 1 and w.body


def test_weighted_cluster_inputs_are_rank_order_prefix():
    p = pts(10)
    totals = [0.3, 2.5, 0.3, 1.9, 0.0, 2.5, 0.7, 1.1, 3.0, 0.2]
    sc = scores_for([x.id for x in p], totals)
    rec = Recorder()
    s = summarize_cluster(4, p, WEIGHTED, rec, n=5, scores=sc)
    expected = ["d08", "d01", "d05", "d03", "d07"]  # hand-ranked, ties by id
    assert list(s.input_ids) == expected == rank_order([x.id for x in p], sc)[:5]
    assert rec.requests[0].inputs == tuple(f"word{int(i[1:])} alpha" for i in expected)


def test_unweighted_cluster_inputs_are_id_order():
    p = list(reversed(pts(10)))
    s = summarize_cluster(0, p, UNWEIGHTED, StubBackend(), n=3)
    assert s.input_ids == ("d00", "d01", "d02")


def test_empty_scope_and_missing_scores():
    with pytest.raises(SosError, match="empty scope"):
        summarize_cluster(0, [], UNWEIGHTED, StubBackend())
    with pytest.raises(SosError):
        summarize_cluster(0, pts(2), WEIGHTED, StubBackend())
    with pytest.raises(SosError):
        summarize_cluster(0, pts(2), "bogus", StubBackend())


def test_story_weighted_orders_children_by_mean_snr():
    kids = [child(1), child(2), child(3)]
    rec = Recorder()
    s = summarize_story(0, kids, WEIGHTED, rec, n=2, child_snr={1: 0.2, 2: 0.9, 3: 0.5})
    assert s.input_ids == (2, 3)
    assert rec.requests[0].inputs == ("body of child 2", "body of child 3")


def test_story_singleton_and_cap_saturation():
    one = summarize_story(5, [child(7, UNWEIGHTED)], UNWEIGHTED, StubBackend())
    assert one.input_ids == (7,) and one.level == "story" and one.id == 5
    many = summarize_story(0, [child(i, UNWEIGHTED) for i in (3, 1, 2)], UNWEIGHTED, StubBackend(), n=50)
    assert many.source_count == 3 and many.input_ids == (1, 2, 3)


def test_theme_weighted_puts_higher_snr_story_first():
    kids = [ContextSummary("story", i, WEIGHTED, "t", f"story body {i}", 1, ()) for i in (0, 1)]
    rec = Recorder()
    summarize_theme(0, kids, WEIGHTED, rec, child_snr={0: 0.3, 1: 0.8})
    assert rec.requests[0].inputs == ("story body 1", "story body 0")


def test_unweighted_parent_ignores_scores():
    kids = [child(i, UNWEIGHTED) for i in (1, 2, 3)]
    a = select_child_inputs(kids, UNWEIGHTED, 2, {1: 0.1, 2: 0.2, 3: 0.9})
    b = select_child_inputs(kids, UNWEIGHTED, 2, None)
    assert a == b == kids[:2]


def test_mode_mismatch_among_children():
    with pytest.raises(SosError, match="mode"):
        summarize_story(0, [child(1), child(2, UNWEIGHTED)], WEIGHTED, StubBackend(), child_snr={1: 1, 2: 1})


def test_backend_failure_carries_scope():
    with pytest.raises(BackendError, match="cluster 9"):
        summarize_cluster(9, pts(2), UNWEIGHTED, Failing())


def test_summary_round_trip():
    s = child(4)
    assert ContextSummary.from_dict(s.to_dict()) == s


@pytest.fixture(scope="module")
def tree_inputs():
    stub = StubBackend()
    corpus = pipeline_corpus(120, 5)
    emb = stub.embed([p.text for p in corpus])
    a, index = build_hierarchy(corpus, emb)
    points = {p.id: p for p in corpus}
    scores, _ = score_all(points, dict(zip(points, emb)), a, index, stub.stopwords)
    return points, a, index, scores


def test_context_tree_is_complete_and_deterministic(tree_inputs):
    points, a, index, scores = tree_inputs
    for mode in (WEIGHTED, UNWEIGHTED):
        tree = build_context_tree(points, a, index, mode, StubBackend(), scores, cluster_cap=3)
        expected = {("cluster", c) for c in index.clusters}
        expected |= {("story", s) for s in index.stories}
        expected |= {("theme", t) for t in index.themes}
        assert set(tree) == expected
        assert all(s.mode == mode and s.body for s in tree.values())
        again = build_context_tree(points, a, index, mode, StubBackend(), scores, cluster_cap=3)
        assert {k: v.to_dict() for k, v in again.items()} == {k: v.to_dict() for k, v in tree.items()}


def test_modes_differ_only_where_selection_differs(tree_inputs):
    points, a, index, scores = tree_inputs
    w = build_context_tree(points, a, index, WEIGHTED, StubBackend(), scores, cluster_cap=3)
    u = build_context_tree(points, a, index, UNWEIGHTED, StubBackend(), scores, cluster_cap=3)
    same = differ = 0
    for level in ("cluster", "story", "theme"):
        for key in [k for k in w if k[0] == level]:
            child_level = {"story": "cluster", "theme": "story"}.get(level)
            inputs_match = w[key].input_ids == u[key].input_ids
            if child_level:
                inputs_match = inputs_match and all(
                    w[(child_level, c)].body == u[(child_level, c)].body for c in w[key].input_ids
                )
            if inputs_match:
                assert (w[key].title, w[key].body) == (u[key].title, u[key].body)
                same += 1
            else:
                differ += 1
    assert same and differ
