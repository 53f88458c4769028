"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 missing upstream
artifact, 3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .backends import BackendError
from .categorize import SCENARIOS, CategorizeError
from .config import ConfigError, PipelineConfig, apply, from_dict, load, option_keys
from .corpus import CorpusError, dumps_corpus
from .evalqa import EvalError
from .hierarchy import STAGE_ALL, STAGE_NO_OUTLIERS, STAGES, HierarchyError
from .pipeline import (
    MANIFEST,
    LockedError,
    PipelineError,
    UpstreamMissing,
    Workspace,
    categorize_step,
    characterize_step,
    evaluate_step,
    execute,
    filter_step,
    hierarchy_step,
    ingest_step,
    metrics_step,
    report_step,
    run_all,
    sankey_step,
    snr_step,
    summarize_step,
)
from .snr import SnrError
from .sos import MODES, WEIGHTED, SosError
from .synthetic import pipeline_corpus

EXIT_OK, EXIT_USAGE, EXIT_UPSTREAM, EXIT_BACKEND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for missing upstream."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# shorthand flags for frequently used config keys
ALIASES = {
    "backend": "backend.kind",
    "max_inflight": "backend.max_inflight",
    "input": "input.path",
    "format": "input.format",
    "seed": "seed",
    "out": "out",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options")
    g.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="JSON config file")
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--seed", metavar="N", type=int, default=argparse.SUPPRESS)
    g.add_argument("--backend", choices=("stub", "http"), default=argparse.SUPPRESS)
    g.add_argument("--max-inflight", dest="max_inflight", metavar="N", type=int, default=argparse.SUPPRESS)
    g.add_argument("--input", metavar="PATH", default=argparse.SUPPRESS, help="corpus file (JSONL or CSV)")
    g.add_argument("--format", choices=("jsonl", "csv"), default=argparse.SUPPRESS)
    g.add_argument("--force", action="store_true", default=argparse.SUPPRESS, help="rerun completed steps")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    o = p.add_argument_group("config overrides (flag > file > default)")
    for key, default in option_keys().items():
        if "." not in key:
            continue
        o.add_argument(f"--{key}", dest=f"cfg:{key}", metavar=type(default).__name__.upper(), default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="wssas", description="Weighted summary-of-summaries analysis pipeline", parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    add = lambda name, help_: sub.add_parser(name, help=help_, parents=[common], description=help_)  # noqa: E731

    add("ingest", "parse the input corpus into canonical JSONL")
    add("characterize", "entity volume / temporal presence profile")
    add("hierarchy", "embed points and build the theme/story/cluster hierarchy")
    add("snr", "keyword profiles and per-point SNR")
    add("filter", "irrelevant-data and outlier filter stages")
    p = add("summarize", "bottom-up context summaries")
    p.add_argument("--mode", choices=MODES, default=WEIGHTED)
    p.add_argument("--stage", choices=STAGES, default=STAGE_NO_OUTLIERS)
    p = add("categorize", "topic extraction and category clusters")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--stage", choices=STAGES, default=STAGE_ALL)
    p = add("evaluate", "QAG and G-Eval comparison of weighted vs unweighted summaries")
    p.add_argument("--stage", choices=STAGES, default=None)
    add("metrics", "per scenario/stage clustering metrics")
    add("sankey", "category transition flows between scenarios")
    add("report", "tables and figures")
    add("all", "run every step")
    p = add("synth", "write a seeded synthetic review corpus")
    p.add_argument("output", type=Path)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--noise", type=int, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """File (or the output directory's recorded config) < flags."""
    ns = vars(args)
    overrides = {k[4:]: v for k, v in ns.items() if k.startswith("cfg:")}
    for flag, key in ALIASES.items():
        if flag in ns:
            overrides[key] = ns[flag]
    if "config" in ns:
        return load(ns["config"], overrides)
    out = Path(str(overrides.get("out", PipelineConfig().out)))
    manifest = out / MANIFEST
    if manifest.is_file():
        try:
            recorded = json.loads(manifest.read_text(encoding="utf-8")).get("config", {})
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable manifest {manifest}: {exc}") from exc
        cfg = from_dict(recorded)
        apply(cfg, overrides)
        return cfg.validate()
    return load(None, overrides)


def _steps(args: argparse.Namespace, ws: Workspace):
    cmd = args.command
    simple = {
        "ingest": ingest_step,
        "characterize": characterize_step,
        "hierarchy": hierarchy_step,
        "snr": snr_step,
        "filter": filter_step,
    }
    if cmd in simple:
        return [simple[cmd]()]
    if cmd == "summarize":
        return [summarize_step(args.stage, args.mode)]
    if cmd == "categorize":
        return [categorize_step(args.scenario, args.stage)]
    if cmd == "evaluate":
        return [evaluate_step(args.stage or ws.cfg.eval.stage)]
    if cmd == "metrics":
        return [metrics_step(ws)]
    if cmd == "sankey":
        return [sankey_step(ws)]
    if cmd == "report":
        return [report_step(ws)]
    raise ConfigError(f"unknown command {cmd!r}")


def run(args: argparse.Namespace) -> int:
    if args.command == "synth":
        corpus = pipeline_corpus(args.points, getattr(args, "seed", 0), args.noise)
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_bytes(dumps_corpus(corpus))
        print(f"wrote {len(corpus)} points to {args.output}")
        return EXIT_OK

    cfg = resolve_config(args)
    force = bool(getattr(args, "force", False))
    with Workspace(cfg.out, cfg, force=force) as ws:
        if args.command == "all":
            results = run_all(ws)
        else:
            results = {s.key: execute(ws, s) for s in _steps(args, ws)}
    for key, status in results.items():
        print(f"{key}: {status}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except UpstreamMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, CorpusError, LockedError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HierarchyError, SnrError, SosError, CategorizeError, EvalError) as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
