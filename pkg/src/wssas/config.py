"""Pipeline configuration: JSON file, CLI overrides, defaults (in that precedence)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .corpus import DEFAULT_FIELDS
from .hierarchy import STAGE_NO_OUTLIERS, STAGES, HierarchyConfig
from .snr import FilterConfig


class ConfigError(ValueError):
    pass


@dataclass
class InputConfig:
    path: str = ""
    format: str = "jsonl"
    fields: dict = field(default_factory=lambda: dict(DEFAULT_FIELDS))
    strict: bool = True


@dataclass
class BackendConfig:
    kind: str = "stub"
    base_url: str = ""
    gen_model: str = ""
    embed_model: str = ""
    dimension: int = 256
    max_inflight: int = 4
    max_retries: int = 5
    timeout: float = 30.0


@dataclass
class SnrConfig:
    m: int = 10
    stopwords_path: str = ""


@dataclass
class SosConfig:
    cluster_cap: int = 20
    child_cap: int = 10


@dataclass
class EvalConfig:
    theta_sem: float = 0.7
    n_questions: int = 5
    stage: str = STAGE_NO_OUTLIERS


@dataclass
class CategorizeConfig:
    k_min: int = 2
    k_max: int = 10
    restarts: int = 10


@dataclass
class PipelineConfig:
    input: InputConfig = field(default_factory=InputConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    snr: SnrConfig = field(default_factory=SnrConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    sos: SosConfig = field(default_factory=SosConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    categorize: CategorizeConfig = field(default_factory=CategorizeConfig)
    seed: int = 0
    out: str = "wssas_out"

    def to_dict(self) -> dict:
        return asdict(self)

    def violations(self) -> list[str]:
        out = list(self.hierarchy.violations()) + list(self.filter.violations())
        if self.input.format not in ("jsonl", "csv"):
            out.append(f"input.format={self.input.format!r} must be jsonl or csv")
        if self.backend.kind not in ("stub", "http"):
            out.append(f"backend.kind={self.backend.kind!r} must be stub or http")
        if self.backend.kind == "http" and not self.backend.base_url:
            out.append("backend.base_url is required when backend.kind is http")
        if self.backend.dimension < 1:
            out.append("backend.dimension must be positive")
        if self.backend.max_inflight < 1:
            out.append("backend.max_inflight must be >= 1")
        if self.backend.max_retries < 0:
            out.append("backend.max_retries must be >= 0")
        if self.snr.m < 1:
            out.append("snr.m must be >= 1")
        if self.sos.cluster_cap < 1 or self.sos.child_cap < 1:
            out.append("sos caps must be >= 1")
        if not 0.0 < self.eval.theta_sem <= 1.0:
            out.append("eval.theta_sem must lie in (0, 1]")
        if not 1 <= self.eval.n_questions <= 5:
            out.append("eval.n_questions must lie in 1..5")
        if self.eval.stage not in STAGES:
            out.append(f"eval.stage must be one of {STAGES}")
        if not 2 <= self.categorize.k_min <= self.categorize.k_max:
            out.append("categorize requires 2 <= k_min <= k_max")
        if self.categorize.restarts < 1:
            out.append("categorize.restarts must be >= 1")
        if not isinstance(self.seed, int):
            out.append("seed must be an integer")
        return out

    def validate(self) -> PipelineConfig:
        problems = self.violations()
        if problems:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))
        return self


SECTIONS = ("input", "backend", "hierarchy", "snr", "filter", "sos", "eval", "categorize")


def _coerce(value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(default, dict):
        if isinstance(value, dict):
            return value
        try:
            parsed = json.loads(value)
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"expected a JSON object: {value!r}") from exc
        if not isinstance(parsed, dict):
            raise ConfigError(f"expected a JSON object: {value!r}")
        return parsed
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {type(default).__name__}, got {value!r}") from None
    return str(value)


def option_keys(cfg: PipelineConfig | None = None) -> dict[str, object]:
    """Every overridable key ('section.name' or top-level name) with its default."""
    cfg = cfg or PipelineConfig()
    out: dict[str, object] = {}
    for name in SECTIONS:
        section = getattr(cfg, name)
        for f in fields(section):
            out[f"{name}.{f.name}"] = getattr(section, f.name)
    out["seed"] = cfg.seed
    out["out"] = cfg.out
    return out


def apply(cfg: PipelineConfig, overrides: dict[str, object]) -> PipelineConfig:
    defaults = option_keys(PipelineConfig())
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {key!r}")
        coerced = _coerce(value, defaults[key])
        if "." in key:
            section, name = key.split(".", 1)
            setattr(getattr(cfg, section), name, coerced)
        else:
            setattr(cfg, key, coerced)
    return cfg


def flatten(data: dict, prefix: str = "") -> dict[str, object]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and k in SECTIONS and not prefix:
            out.update(flatten(v, f"{key}."))
        else:
            out[key] = v
    return out


def from_dict(data: dict) -> PipelineConfig:
    return apply(PipelineConfig(), flatten(data))


def load(path: str | Path | None, overrides: dict[str, object] | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = from_dict(data)
    if overrides:
        apply(cfg, overrides)
    return cfg.validate()
