import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wssas.metrics import MetricError, calinski_harabasz, davies_bouldin, metric_report, silhouette


# definitional oracles, written from the formulas with plain Python loops


def dist(p, q):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def groups(points, labels):
    out = {}
    for p, l in zip(points, labels):
        out.setdefault(l, []).append(p)
    return out


def mean_vec(ps):
    return [sum(c) / len(ps) for c in zip(*ps)]


def oracle_silhouette(points, labels):
    g = groups(points, labels)
    total = 0.0
    for i, (p, l) in enumerate(zip(points, labels)):
        own = [q for j, (q, m) in enumerate(zip(points, labels)) if m == l and j != i]
        if not own:
            continue
        a = sum(dist(p, q) for q in own) / len(own)
        b = min(sum(dist(p, q) for q in qs) / len(qs) for m, qs in g.items() if m != l)
        total += 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return total / len(points)


def oracle_db(points, labels):
    g = groups(points, labels)
    cents = {l: mean_vec(ps) for l, ps in g.items()}
    sig = {l: sum(dist(p, cents[l]) for p in ps) / len(ps) for l, ps in g.items()}
    return sum(
        max((sig[i] + sig[j]) / dist(cents[i], cents[j]) for j in g if j != i) for i in g
    ) / len(g)


def oracle_ch(points, labels):
    g = groups(points, labels)
    n, k = len(points), len(g)
    overall = mean_vec(points)
    b = sum(len(ps) * dist(mean_vec(ps), overall) ** 2 for ps in g.values())
    w = sum(dist(p, mean_vec(ps)) ** 2 for ps in g.values() for p in ps)
    return (b / (k - 1)) / (w / (n - k))


PAIRS = [[0.0], [1.0], [5.0], [6.0]]
PAIR_LABELS = [0, 0, 1, 1]


def test_one_dimensional_example():
    assert silhouette(PAIRS, PAIR_LABELS) == pytest.approx((9 / 11 + 7 / 9 + 7 / 9 + 9 / 11) / 4, abs=1e-12)
    assert silhouette(PAIRS, PAIR_LABELS) == pytest.approx(0.79798, abs=5e-6)
    assert davies_bouldin(PAIRS, PAIR_LABELS) == pytest.approx(0.2, abs=1e-12)
    assert calinski_harabasz(PAIRS, PAIR_LABELS) == pytest.approx(50.0, abs=1e-9)


def test_coincident_pairs():
    pts = [[0, 0], [0, 0], [3, 4], [3, 4]]
    assert silhouette(pts, [0, 0, 1, 1]) == 1.0
    assert davies_bouldin(pts, [0, 0, 1, 1]) == 0.0
    with pytest.raises(MetricError, match="zero within-dispersion"):
        calinski_harabasz(pts, [0, 0, 1, 1])


def test_all_singletons_silhouette_is_zero():
    assert silhouette([[0], [1], [3]], [0, 1, 2]) == 0.0


def test_separated_beats_overlapping_db():
    tight = [[0, 0], [0, 1], [10, 0], [10, 1]]
    loose = [[0, 0], [4, 1], [3, 0], [7, 1]]
    assert davies_bouldin(tight, [0, 0, 1, 1]) < davies_bouldin(loose, [0, 0, 1, 1])


def test_error_cases():
    with pytest.raises(MetricError, match="2 clusters"):
        silhouette([[0], [1]], [0, 0])
    with pytest.raises(MetricError, match="degenerate centroids"):
        davies_bouldin([[0], [2], [1], [1]], [0, 0, 1, 1])
    with pytest.raises(MetricError):
        calinski_harabasz([[0], [1]], [0, 1])
    with pytest.raises(MetricError, match="NaN"):
        silhouette([[0], [float("nan")]], [0, 1])
    with pytest.raises(MetricError, match="aligned"):
        silhouette([[0], [1]], [0])


def test_report_uses_none_for_undefined():
    r = metric_report([[0, 0], [0, 0], [3, 4], [3, 4]], [0, 0, 1, 1])
    assert r == {"silhouette": 1.0, "davies_bouldin": 0.0, "calinski_harabasz": None}


def random_instance(rng):
    n = rng.randint(4, 12)
    dim = rng.randint(1, 3)
    k = rng.choice([2, 3])
    labels = [i % k for i in range(n)]
    rng.shuffle(labels)
    pts = [[rng.uniform(-5, 5) for _ in range(dim)] for _ in range(n)]
    return pts, labels


def test_oracle_equivalence_on_250_random_instances():
    rng = random.Random(2024)
    checked = 0
    for _ in range(250):
        pts, labels = random_instance(rng)
        assert silhouette(pts, labels) == pytest.approx(oracle_silhouette(pts, labels), abs=1e-9)
        assert davies_bouldin(pts, labels) == pytest.approx(oracle_db(pts, labels), abs=1e-9)
        assert calinski_harabasz(pts, labels) == pytest.approx(oracle_ch(pts, labels), rel=1e-9, abs=1e-9)
        checked += 1
    assert checked >= 200


def test_oracle_with_duplicate_vectors():
    pts = [[0, 0], [0, 0], [1, 0], [5, 5], [5, 5], [1, 0]]
    labels = [0, 0, 0, 1, 1, 1]
    assert silhouette(pts, labels) == pytest.approx(oracle_silhouette(pts, labels), abs=1e-12)


instance = st.integers(0, 2**32 - 1).map(lambda s: random_instance(random.Random(s)))


@settings(max_examples=100, deadline=None)
@given(instance, st.randoms(use_true_random=False))
def test_permutation_invariance(inst, rnd):
    pts, labels = inst
    order = list(range(len(pts)))
    rnd.shuffle(order)
    p2 = [pts[i] for i in order]
    l2 = [labels[i] for i in order]
    for fn in (silhouette, davies_bouldin, calinski_harabasz):
        assert fn(p2, l2) == pytest.approx(fn(pts, labels), abs=1e-12, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(instance)
def test_relabel_invariance_is_exact(inst):
    pts, labels = inst
    renamed = [{0: "z", 1: "a", 2: "m"}[l] for l in labels]
    assert metric_report(pts, renamed) == metric_report(pts, labels)


@settings(max_examples=100, deadline=None)
@given(instance, st.floats(0.01, 100))
def test_ch_scale_invariance(inst, c):
    pts, labels = inst
    scaled = (np.asarray(pts) * c).tolist()
    assert calinski_harabasz(scaled, labels) == pytest.approx(calinski_harabasz(pts, labels), rel=1e-9)
