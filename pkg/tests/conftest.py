from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from wssas.backends import StubBackend
from wssas.corpus import Corpus, DataPoint


def make_corpus(texts, entities=None, start=date(2021, 1, 1)) -> Corpus:
    points = []
    for i, text in enumerate(texts):
        entity = entities[i] if entities else f"e{i % 3}"
        points.append(DataPoint(f"p{i:04d}", text, entity, start))
    return Corpus(tuple(points))


def brute_cos(u, v) -> float:
    u, v = np.asarray(u, float), np.asarray(v, float)
    nu, nv = np.sqrt(sum(x * x for x in u)), np.sqrt(sum(x * x for x in v))
    if nu == 0 or nv == 0:
        return 0.0
    return float(sum(a * b for a, b in zip(u, v)) / (nu * nv))


@pytest.fixture
def stub() -> StubBackend:
    return StubBackend()


@pytest.fixture
def stub_nostop() -> StubBackend:
    """Stub embedder that keeps every token (no stopword removal)."""
    return StubBackend(stopwords=frozenset())


# acceptance criteria report: one PASS/FAIL line per numbered criterion

_CRITERIA: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    n, title = marker.args
    _CRITERIA.setdefault(n, [title])
    _CRITERIA[n].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, *results = _CRITERIA[n]
        status = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
