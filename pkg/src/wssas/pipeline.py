"""Artifact-directory orchestration: one step per subcommand, a digest manifest, a lock.

Every step declares the artifacts it reads. A step whose recorded inputs
still match the manifest digests is skipped unless forced. Outputs are
computed fully in memory and only then written, so a failed step leaves
the directory untouched.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import __version__
from .backends import Backend, make_backend
from .categorize import (
    BASELINE,
    SANKEY_PAIRS,
    SCENARIO_MODE,
    SCENARIOS,
    CategorizeError,
    category_clusters,
    extract_all,
    sankey,
    sankey_export,
)
from .config import ConfigError, PipelineConfig
from .corpus import Corpus, characterize, dumps_corpus, ingest, loads_corpus
from .evalqa import evaluate_all
from .hierarchy import (
    STAGE_ALL,
    STAGE_NO_IRRELEVANT,
    STAGE_NO_OUTLIERS,
    STAGES,
    HierarchyAssignment,
    HierarchyIndex,
    build_hierarchy,
    hierarchy_stats,
)
from .snr import SnrScore, filter_irrelevant, filter_outliers, no_irrelevant_index, score_all
from .sos import MODES, ContextSummary, build_context_tree
from .text import load_stopwords

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOCK = ".wssas.lock"
LEVEL_ORDER = {"cluster": 0, "story": 1, "theme": 2}

# config keys that change how a run executes but not what it produces
OPERATIONAL_KEYS = {("backend", "max_inflight"), ("backend", "timeout"), ("backend", "max_retries")}


class PipelineError(RuntimeError):
    pass


class UpstreamMissing(PipelineError):
    def __init__(self, command: str, hint: str = ""):
        self.command = command
        msg = f"requires: {command}"
        super().__init__(f"{msg} ({hint})" if hint else msg)


class LockedError(PipelineError):
    pass


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def dump_jsonl(rows: Iterable[Mapping]) -> bytes:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows).encode("utf-8")


def config_fingerprint(cfg_dict: Mapping) -> dict:
    """The result-affecting part of a config snapshot."""
    out = {}
    for key, value in cfg_dict.items():
        if key == "out":
            continue
        if isinstance(value, dict):
            value = {k: v for k, v in value.items() if (key, k) not in OPERATIONAL_KEYS}
        out[key] = value
    return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---- artifact layout -------------------------------------------------------

CORPUS = "corpus.jsonl"
INGEST_REPORT = "ingest_report.json"
PROFILE = "profile.json"
EMBEDDINGS = "embeddings.npy"
H_ASSIGN = "hierarchy/assignments.jsonl"
H_INDEX = "hierarchy/index.json"
H_STATS = "hierarchy/stats.json"
SNR_SCORES = "snr/scores.jsonl"
SNR_KEYWORDS = "snr/keywords.json"
PRUNING = "filter/pruning_report.json"
STAGE_STATS = "filter/stage_stats.json"


def stage_assignments(stage: str) -> str:
    return H_ASSIGN if stage == STAGE_ALL else f"filter/{stage}.assignments.jsonl"


def stage_index(stage: str) -> str:
    return H_INDEX if stage == STAGE_ALL else f"filter/{stage}.index.json"


def summaries_path(stage: str, mode: str) -> str:
    return f"summaries/{stage}/{mode}.json"


def topics_path(scenario: str, stage: str) -> str:
    return f"categorize/{scenario}/{stage}/topics.jsonl"


def clustering_path(scenario: str, stage: str) -> str:
    return f"categorize/{scenario}/{stage}/clustering.json"


def evaluate_paths(stage: str) -> tuple[str, str]:
    return f"evaluate/{stage}/units.jsonl", f"evaluate/{stage}/aggregate.json"


def metrics_path(scenario: str, stage: str) -> str:
    return f"metrics/{scenario}__{stage}.json"


def sankey_path(stage: str, a: str, b: str) -> str:
    return f"sankey/{stage}/{a}__{b}.json"


FILTER_OUTPUTS = [
    stage_assignments(STAGE_NO_IRRELEVANT),
    stage_index(STAGE_NO_IRRELEVANT),
    stage_assignments(STAGE_NO_OUTLIERS),
    stage_index(STAGE_NO_OUTLIERS),
    PRUNING,
    STAGE_STATS,
]


# ---- workspace -------------------------------------------------------------


class Workspace:
    """An output directory with its manifest. Use as a context manager to hold the lock."""

    def __init__(self, root: str | Path, cfg: PipelineConfig, force: bool = False):
        self.root = Path(root)
        self.cfg = cfg
        self.force = force
        self._lock = FileLock(str(self.root / LOCK), timeout=0)
        self._backend: Backend | None = None
        self._stopwords: frozenset[str] | None = None
        self.manifest: dict = {}

    def __enter__(self) -> Workspace:
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            self._lock.acquire()
        except Timeout:
            raise LockedError(f"{self.root} is in use by another wssas process") from None
        try:
            self.manifest = self._open_manifest()
        except Exception:
            self._lock.release()
            raise
        return self

    def __exit__(self, *exc) -> None:
        self._lock.release()

    def _open_manifest(self) -> dict:
        fresh = {
            "version": __version__,
            "config": self.cfg.to_dict(),
            "run_digest": "",
            "steps": {},
            "artifacts": {},
        }
        path = self.root / MANIFEST
        if not path.exists():
            return fresh
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError(f"unreadable manifest {path}: {exc}") from exc
        if config_fingerprint(manifest.get("config", {})) != config_fingerprint(self.cfg.to_dict()):
            if not self.force:
                raise ConfigError(
                    f"{self.root} holds a run with a different configuration; "
                    "use a new --out or rerun everything with --force"
                )
            log.warning("configuration changed; discarding previous step records")
            return fresh
        manifest["config"] = self.cfg.to_dict()
        return manifest

    # -- artifacts

    def exists(self, rel: str) -> bool:
        return rel in self.manifest["artifacts"] and (self.root / rel).is_file()

    def read_bytes(self, rel: str) -> bytes:
        return (self.root / rel).read_bytes()

    def read_json(self, rel: str):
        return json.loads(self.read_bytes(rel).decode("utf-8"))

    def read_jsonl(self, rel: str) -> list[dict]:
        return [json.loads(line) for line in self.read_bytes(rel).decode("utf-8").split("\n") if line.strip()]

    def _write(self, rel: str, data: bytes) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self.manifest["artifacts"][rel] = sha256(data)

    def _save_manifest(self) -> None:
        arts = self.manifest["artifacts"]
        self.manifest["artifacts"] = dict(sorted(arts.items()))
        self.manifest["run_digest"] = run_digest(self.manifest)
        data = dump_json(self.manifest)
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, self.root / MANIFEST)

    # -- shared resources

    @property
    def stopwords(self) -> frozenset[str]:
        if self._stopwords is None:
            try:
                self._stopwords = load_stopwords(self.cfg.snr.stopwords_path)
            except OSError as exc:
                raise ConfigError(f"cannot read stopwords: {exc}") from exc
        return self._stopwords

    @property
    def backend(self) -> Backend:
        if self._backend is None:
            self._backend = make_backend(self.cfg.backend, self.stopwords)
        return self._backend

    # -- loaders

    def corpus(self) -> Corpus:
        return loads_corpus(self.read_bytes(CORPUS))

    def embeddings(self) -> dict[str, np.ndarray]:
        corpus = self.corpus()
        emb = np.load(io.BytesIO(self.read_bytes(EMBEDDINGS)), allow_pickle=False)
        return {p.id: emb[i] for i, p in enumerate(corpus)}

    def assignments(self, stage: str) -> list[HierarchyAssignment]:
        return [HierarchyAssignment.from_dict(r) for r in self.read_jsonl(stage_assignments(stage))]

    def index(self, stage: str) -> HierarchyIndex:
        return HierarchyIndex.from_dict(self.read_json(stage_index(stage)))

    def scores(self) -> dict[str, SnrScore]:
        return {
            r["point_id"]: SnrScore(r["s_theme"], r["s_story"], r["s_cluster"], r["total"])
            for r in self.read_jsonl(SNR_SCORES)
        }

    def summaries(self, stage: str, mode: str) -> dict[tuple[str, int], ContextSummary]:
        rows = self.read_json(summaries_path(stage, mode))
        return {(r["level"], int(r["id"])): ContextSummary.from_dict(r) for r in rows}

    def clustering(self, scenario: str, stage: str) -> dict:
        return self.read_json(clustering_path(scenario, stage))


def run_digest(manifest: Mapping) -> str:
    """Digest of the result-affecting config plus every artifact digest."""
    payload = {
        "config": config_fingerprint(manifest.get("config", {})),
        "artifacts": dict(sorted(manifest.get("artifacts", {}).items())),
    }
    return sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))


# ---- step machinery --------------------------------------------------------


@dataclass
class Step:
    key: str
    command: str
    # upstream requirements in pipeline order: (subcommand to run, artifact paths, hint)
    requires: list[tuple[str, list[str], str]]
    compute: Callable[[Workspace], dict[str, bytes]]
    extra_inputs: list[str] = field(default_factory=list)

    def inputs(self) -> list[str]:
        out = [p for _, paths, _ in self.requires for p in paths] + self.extra_inputs
        return sorted(set(out))


def execute(ws: Workspace, step: Step) -> str:
    """Run one step; returns 'ran' or 'skipped'."""
    for command, paths, hint in step.requires:
        if not all(ws.exists(p) for p in paths):
            raise UpstreamMissing(command, hint)
    inputs = {p: ws.manifest["artifacts"][p] for p in step.inputs()}
    record = ws.manifest["steps"].get(step.key)
    if (
        record is not None
        and not ws.force
        and record.get("inputs") == inputs
        and all(ws.exists(p) for p in record.get("outputs", []))
    ):
        log.info("%s: up to date", step.key)
        return "skipped"
    started = _now()
    log.info("%s: running", step.key)
    outputs = step.compute(ws)
    previous = set(record.get("outputs", [])) if record else set()
    for rel in sorted(previous - set(outputs)):
        ws.manifest["artifacts"].pop(rel, None)
        (ws.root / rel).unlink(missing_ok=True)
    for rel, data in outputs.items():
        ws._write(rel, data)
    ws.manifest["steps"][step.key] = {
        "command": step.command,
        "started": started,
        "finished": _now(),
        "inputs": inputs,
        "outputs": sorted(outputs),
    }
    ws._save_manifest()
    return "ran"


# ---- step definitions ------------------------------------------------------


def _req_ingest() -> tuple[str, list[str], str]:
    return ("ingest", [CORPUS], "")


def _req_hierarchy() -> tuple[str, list[str], str]:
    return ("hierarchy", [EMBEDDINGS, H_ASSIGN, H_INDEX], "")


def _req_snr() -> tuple[str, list[str], str]:
    return ("snr", [SNR_SCORES], "")


def _req_filter() -> tuple[str, list[str], str]:
    return ("filter", FILTER_OUTPUTS, "")


def ingest_step() -> Step:
    def compute(ws: Workspace) -> dict[str, bytes]:
        icfg = ws.cfg.input
        if not icfg.path:
            raise ConfigError("input.path is not set (use --input)")
        try:
            raw = Path(icfg.path).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read input: {exc}") from exc
        corpus, report = ingest(raw, icfg.format, icfg.fields, icfg.strict)
        return {CORPUS: dumps_corpus(corpus), INGEST_REPORT: dump_json(report.to_dict())}

    return Step("ingest", "ingest", [], compute)


def characterize_step() -> Step:
    def compute(ws: Workspace) -> dict[str, bytes]:
        return {PROFILE: dump_json(characterize(ws.corpus()).to_dict())}

    return Step("characterize", "characterize", [_req_ingest()], compute)


def hierarchy_step() -> Step:
    def compute(ws: Workspace) -> dict[str, bytes]:
        corpus = ws.corpus()
        emb = ws.backend.embed([p.text for p in corpus])
        assignments, index = build_hierarchy(corpus, emb, ws.cfg.hierarchy)
        buf = io.BytesIO()
        np.save(buf, np.asarray(emb, dtype=np.float64), allow_pickle=False)
        return {
            EMBEDDINGS: buf.getvalue(),
            H_ASSIGN: dump_jsonl(a.to_dict() for a in assignments),
            H_INDEX: dump_json(index.to_dict()),
            H_STATS: dump_json(hierarchy_stats(assignments, index).to_dict()),
        }

    return Step("hierarchy", "hierarchy", [_req_ingest()], compute)


def snr_step() -> Step:
    def compute(ws: Workspace) -> dict[str, bytes]:
        corpus = ws.corpus()
        scores, profiles = score_all(
            corpus.by_id(),
            ws.embeddings(),
            ws.assignments(STAGE_ALL),
            ws.index(STAGE_ALL),
            ws.stopwords,
            ws.cfg.snr.m,
        )
        return {
            SNR_SCORES: dump_jsonl(scores[pid].to_dict(pid) for pid in sorted(scores)),
            SNR_KEYWORDS: dump_json([profiles[c].to_dict() for c in sorted(profiles)]),
        }

    return Step("snr", "snr", [_req_ingest(), _req_hierarchy()], compute)


def filter_step() -> Step:
    def compute(ws: Workspace) -> dict[str, bytes]:
        full = ws.assignments(STAGE_ALL)
        full_index = ws.index(STAGE_ALL)
        relevant = filter_irrelevant(full)
        ni_index = no_irrelevant_index(full_index)
        result = filter_outliers(relevant, ws.scores(), ws.cfg.filter, ni_index)
        stats = [
            {"stage": STAGE_ALL, **hierarchy_stats(full, full_index).to_dict()},
            {"stage": STAGE_NO_IRRELEVANT, **hierarchy_stats(relevant, ni_index).to_dict()},
            {"stage": STAGE_NO_OUTLIERS, **hierarchy_stats(result.assignments, result.index).to_dict()},
        ]
        return {
            stage_assignments(STAGE_NO_IRRELEVANT): dump_jsonl(a.to_dict() for a in relevant),
            stage_index(STAGE_NO_IRRELEVANT): dump_json(ni_index.to_dict()),
            stage_assignments(STAGE_NO_OUTLIERS): dump_jsonl(a.to_dict() for a in result.assignments),
            stage_index(STAGE_NO_OUTLIERS): dump_json(result.index.to_dict()),
            PRUNING: dump_json(result.report.to_dict()),
            STAGE_STATS: dump_json(stats),
        }

    return Step("filter", "filter", [_req_ingest(), _req_hierarchy(), _req_snr()], compute)


def _check_choice(value: str, choices: Iterable[str], what: str) -> None:
    if value not in choices:
        raise ConfigError(f"unknown {what} {value!r}; choose from {', '.join(choices)}")


def summarize_step(stage: str, mode: str) -> Step:
    _check_choice(stage, STAGES, "stage")
    _check_choice(mode, MODES, "mode")

    def compute(ws: Workspace) -> dict[str, bytes]:
        tree = build_context_tree(
            ws.corpus().by_id(),
            ws.assignments(stage),
            ws.index(stage),
            mode,
            ws.backend,
            ws.scores(),
            ws.cfg.sos.cluster_cap,
            ws.cfg.sos.child_cap,
            ws.cfg.seed,
        )
        ordered = sorted(tree.values(), key=lambda s: (LEVEL_ORDER[s.level], s.id))
        return {summaries_path(stage, mode): dump_json([s.to_dict() for s in ordered])}

    return Step(
        f"summarize:{stage}:{mode}",
        "summarize",
        [_req_ingest(), _req_hierarchy(), _req_snr(), _req_filter()],
        compute,
    )


def _stage_points(ws: Workspace, stage: str) -> tuple[list, dict[str, int]]:
    corpus = ws.corpus()
    assignments = ws.assignments(stage)
    theme_of = {a.point_id: a.theme_id for a in assignments}
    points = [p for p in corpus if p.id in theme_of]
    return points, theme_of


def categorize_step(scenario: str, stage: str) -> Step:
    _check_choice(scenario, SCENARIOS, "scenario")
    _check_choice(stage, STAGES, "stage")
    requires = [_req_ingest(), _req_hierarchy(), _req_snr(), _req_filter()]
    if scenario != BASELINE:
        mode = SCENARIO_MODE[scenario]
        requires.append(("summarize", [summaries_path(stage, mode)], f"--mode {mode} --stage {stage}"))

    def compute(ws: Workspace) -> dict[str, bytes]:
        points, theme_of = _stage_points(ws, stage)
        contexts: dict[int, ContextSummary] = {}
        if scenario != BASELINE:
            tree = ws.summaries(stage, SCENARIO_MODE[scenario])
            contexts = {i: s for (level, i), s in tree.items() if level == "theme"}
        topics = extract_all(points, scenario, theme_of, contexts, ws.backend, ws.cfg.seed)
        ccfg = ws.cfg.categorize
        try:
            clustering = category_clusters(
                topics, ws.backend, (ccfg.k_min, ccfg.k_max), ws.cfg.seed, ccfg.restarts
            )
            clustering.stage = stage
            record = {"status": "ok", **clustering.to_dict()}
        except CategorizeError as exc:
            record = degenerate_clustering(scenario, stage, str(exc))
        return {
            topics_path(scenario, stage): dump_jsonl(t.to_dict() for t in topics),
            clustering_path(scenario, stage): dump_json(record),
        }

    return Step(f"categorize:{scenario}:{stage}", "categorize", requires, compute)


def degenerate_clustering(scenario: str, stage: str, error: str) -> dict:
    return {
        "status": "degenerate",
        "error": error,
        "scenario": scenario,
        "stage": stage,
        "k": None,
        "titles": [],
        "metrics": {"silhouette": None, "davies_bouldin": None, "calinski_harabasz": None},
        "volume_pct": [],
        "labels": {},
    }


def evaluate_step(stage: str) -> Step:
    _check_choice(stage, STAGES, "stage")
    requires = [_req_ingest(), _req_hierarchy(), _req_snr(), _req_filter()]
    for mode in MODES:
        requires.append(("summarize", [summaries_path(stage, mode)], f"--mode {mode} --stage {stage}"))

    def compute(ws: Workspace) -> dict[str, bytes]:
        trees = {mode: ws.summaries(stage, mode) for mode in MODES}
        units, aggregate = evaluate_all(
            ws.corpus().by_id(),
            ws.assignments(stage),
            ws.scores(),
            trees,
            ws.backend,
            ws.cfg.eval.theta_sem,
            ws.cfg.eval.n_questions,
            ws.cfg.seed,
        )
        units_rel, agg_rel = evaluate_paths(stage)
        return {
            units_rel: dump_jsonl(u.to_dict() for u in units),
            agg_rel: dump_json({"stage": stage, **aggregate}),
        }

    return Step(f"evaluate:{stage}", "evaluate", requires, compute)


def _present_clusterings(ws: Workspace) -> list[tuple[str, str]]:
    return [(sc, st) for st in STAGES for sc in SCENARIOS if ws.exists(clustering_path(sc, st))]


def _req_clusterings(cells) -> tuple[str, list[str], str]:
    # with nothing categorized yet, point at the first cell so the error names categorize
    paths = [clustering_path(sc, st) for sc, st in cells] or [clustering_path(BASELINE, STAGE_ALL)]
    return ("categorize", paths, "")


def metrics_step(ws: Workspace) -> Step:
    cells = _present_clusterings(ws)

    def compute(ws: Workspace) -> dict[str, bytes]:
        out = {}
        for scenario, stage in cells:
            c = ws.clustering(scenario, stage)
            out[metrics_path(scenario, stage)] = dump_json(
                {"scenario": scenario, "stage": stage, "status": c["status"], **c["metrics"]}
            )
        return out

    return Step("metrics", "metrics", [_req_clusterings(cells)], compute)


def sankey_step(ws: Workspace) -> Step:
    cells = set(_present_clusterings(ws))

    def compute(ws: Workspace) -> dict[str, bytes]:
        out = {}
        for stage in STAGES:
            for a, b in SANKEY_PAIRS:
                if (a, stage) not in cells or (b, stage) not in cells:
                    continue
                ca, cb = ws.clustering(a, stage), ws.clustering(b, stage)
                if ca["status"] != "ok" or cb["status"] != "ok":
                    continue
                flows = sankey(ca["labels"], cb["labels"])
                export = sankey_export(a, b, flows, ca["titles"], cb["titles"])
                out[sankey_path(stage, a, b)] = dump_json({"stage": stage, **export})
        return out

    return Step("sankey", "sankey", [_req_clusterings(sorted(cells))], compute)


def report_step(ws: Workspace) -> Step:
    from .report import build_report

    prefixes = ("categorize/", "evaluate/", "metrics/", "sankey/")
    extra = [p for p in sorted(ws.manifest["artifacts"]) if p.startswith(prefixes) and p.endswith(".json")]
    requires = [_req_ingest(), _req_hierarchy(), _req_snr(), _req_filter()]
    return Step("report", "report", requires, build_report, extra_inputs=extra)


def all_steps(cfg: PipelineConfig) -> list[Callable[[Workspace], Step]]:
    """The full run plan; aggregate steps are built lazily once their inputs exist."""
    plan: list[Callable[[Workspace], Step]] = [
        lambda ws: ingest_step(),
        lambda ws: characterize_step(),
        lambda ws: hierarchy_step(),
        lambda ws: snr_step(),
        lambda ws: filter_step(),
    ]
    for stage in STAGES:
        for mode in MODES:
            plan.append(lambda ws, st=stage, m=mode: summarize_step(st, m))
    for stage in STAGES:
        for scenario in SCENARIOS:
            plan.append(lambda ws, sc=scenario, st=stage: categorize_step(sc, st))
    plan.append(lambda ws: evaluate_step(cfg.eval.stage))
    plan += [metrics_step, sankey_step, report_step]
    return plan


def run_all(ws: Workspace) -> dict[str, str]:
    results = {}
    for make in all_steps(ws.cfg):
        step = make(ws)
        results[step.key] = execute(ws, step)
    return results

