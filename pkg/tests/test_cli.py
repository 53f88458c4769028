import hashlib
import json

import pytest
from filelock import FileLock

from wssas.backends import StubBackend
from wssas.categorize import SCENARIOS
from wssas.cli import main
from wssas.corpus import dumps_corpus
from wssas.hierarchy import STAGES
from wssas.pipeline import LOCK, MANIFEST, clustering_path, run_digest
from wssas.report import REPORT_JSON, REPORT_TXT
from wssas.synthetic import pipeline_corpus


def write_corpus(path, n=12, seed=0):
    path.write_bytes(dumps_corpus(pipeline_corpus(n, seed)))
    return path


def manifest(out):
    return json.loads((out / MANIFEST).read_text())


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = write_corpus(root / "corpus.jsonl")
    out = root / "out"
    assert main(["all", "--input", str(data), "--out", str(out)]) == 0
    return data, out


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["categorize", "--scenario", "nope"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_invalid_config_lists_violations(tmp_path, capsys):
    code = main(["ingest", "--out", str(tmp_path), "--hierarchy.tau_cluster", "0.2", "--eval.theta_sem", "2"])
    assert code == 1
    err = capsys.readouterr().err
    assert "tau" in err and "theta_sem" in err


def test_missing_input_is_config_error(tmp_path, capsys):
    assert main(["ingest", "--out", str(tmp_path / "o")]) == 1
    assert "input.path" in capsys.readouterr().err


def test_categorize_before_hierarchy_exits_2(tmp_path, capsys):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    assert main(["ingest", "--input", str(data), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["categorize", "--scenario", "baseline", "--out", str(out)]) == 2
    assert "requires: hierarchy" in capsys.readouterr().err


def test_summarize_before_anything_names_ingest(tmp_path, capsys):
    assert main(["summarize", "--out", str(tmp_path)]) == 2
    assert "requires: ingest" in capsys.readouterr().err


def test_full_run_lists_all_nine_cells(full_run):
    _, out = full_run
    m = manifest(out)
    for scenario in SCENARIOS:
        for stage in STAGES:
            rel = clustering_path(scenario, stage)
            assert rel in m["artifacts"]
            assert (out / rel).is_file()
    for rel, digest in m["artifacts"].items():
        assert hashlib.sha256((out / rel).read_bytes()).hexdigest() == digest
    assert m["run_digest"] == run_digest(m)
    assert all("started" in s and "finished" in s for s in m["steps"].values())


def test_rerun_is_a_noop(full_run, capsys):
    data, out = full_run
    before = manifest(out)
    capsys.readouterr()
    assert main(["all", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed and all(line.endswith(": skipped") for line in printed)
    assert main(["hierarchy", "--out", str(out)]) == 0
    assert manifest(out) == before


def test_force_reruns(tmp_path, capsys):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    assert main(["ingest", "--input", str(data), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["ingest", "--out", str(out), "--force"]) == 0
    assert capsys.readouterr().out.strip() == "ingest: ran"


def test_config_change_needs_force(tmp_path, capsys):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    assert main(["ingest", "--input", str(data), "--out", str(out)]) == 0
    assert main(["ingest", "--out", str(out), "--seed", "9"]) == 1
    assert "different configuration" in capsys.readouterr().err
    assert main(["ingest", "--out", str(out), "--seed", "9", "--force"]) == 0
    assert manifest(out)["config"]["seed"] == 9
    # operational settings do not count as a change
    assert main(["ingest", "--out", str(out), "--max-inflight", "7"]) == 0


def test_config_file_and_flag_precedence(tmp_path):
    data = write_corpus(tmp_path / "c.jsonl")
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "o"
    cfg.write_text(json.dumps({"seed": 3, "out": str(out), "input": {"path": str(data)}, "snr": {"m": 4}}))
    assert main(["ingest", "--config", str(cfg), "--snr.m", "6"]) == 0
    recorded = manifest(out)["config"]
    assert recorded["seed"] == 3 and recorded["snr"]["m"] == 6


def test_two_runs_have_equal_digests(full_run, tmp_path):
    data, out = full_run
    other = tmp_path / "again"
    assert main(["all", "--input", str(data), "--out", str(other)]) == 0
    a, b = manifest(out), manifest(other)
    assert a["artifacts"] == b["artifacts"]
    assert a["run_digest"] == b["run_digest"]


def test_report_shape(full_run):
    _, out = full_run
    report = json.loads((out / REPORT_JSON).read_text())
    assert [r["stage"] for r in report["stage_counts"]] == list(STAGES)
    for row in report["stage_counts"]:
        assert set(row) == {"stage", "themes", "stories", "clusters", "points"}
    cells = {(r["scenario"], r["stage"]) for r in report["categorization"]}
    assert cells == {(sc, st) for sc in SCENARIOS for st in STAGES}
    for r in report["categorization"]:
        assert {"k", "titles", "silhouette", "davies_bouldin", "calinski_harabasz", "volume_pct", "status"} <= set(r)
        if r["status"] == "ok":
            assert len(r["titles"]) == r["k"] == len(r["volume_pct"])
            assert abs(sum(r["volume_pct"]) - 100.0) <= 0.1
    text = (out / REPORT_TXT).read_text()
    assert "silhouette" in text.lower()
    for fig in report["figures"]:
        assert (out / fig).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_locked_directory_is_refused(tmp_path, capsys):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    out.mkdir()
    with FileLock(str(out / LOCK)):
        assert main(["ingest", "--input", str(data), "--out", str(out)]) == 1
    assert "in use" in capsys.readouterr().err
    assert main(["ingest", "--input", str(data), "--out", str(out)]) == 0


def test_backend_failure_exits_3(tmp_path, capsys):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    common = ["--out", str(out), "--backend", "http", "--backend.base_url", "http://127.0.0.1:9",
              "--backend.max_retries", "0", "--backend.timeout", "2"]
    assert main(["ingest", "--input", str(data), *common]) == 0
    assert main(["hierarchy", *common]) == 3
    assert "backend error" in capsys.readouterr().err


def test_every_cell_reachable_through_flags(tmp_path):
    data = write_corpus(tmp_path / "c.jsonl")
    out = tmp_path / "o"
    base = ["--out", str(out)]
    assert main(["ingest", "--input", str(data), *base]) == 0
    for cmd in ("hierarchy", "snr", "filter"):
        assert main([cmd, *base]) == 0
    stage = "no_irrelevant_no_outliers"
    for mode in ("weighted", "unweighted"):
        assert main(["summarize", "--mode", mode, "--stage", stage, *base]) == 0
    for scenario in SCENARIOS:
        assert main(["categorize", "--scenario", scenario, "--stage", stage, *base]) == 0
        assert (out / clustering_path(scenario, stage)).is_file()
    assert main(["evaluate", "--stage", stage, *base]) == 0


def test_synth_writes_corpus(tmp_path, capsys):
    target = tmp_path / "s.jsonl"
    assert main(["synth", str(target), "--points", "30", "--noise", "3"]) == 0
    rows = [json.loads(line) for line in target.read_text().splitlines()]
    assert len(rows) == 30
    stub = StubBackend()
    zero = [not stub.embed_one(r["text"]).any() for r in rows]
    assert zero == [False] * 27 + [True] * 3
