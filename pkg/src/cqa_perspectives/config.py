"""Pipeline configuration: one TOML file, resolved into typed sections.

Relative paths resolve against the config file's directory. Backend
endpoints may come from environment variables, which take precedence:
CQA_EMBEDDING_ENDPOINT, CQA_NLI_ENDPOINT, CQA_EXTRACTIVE_ENDPOINT and
CQA_ABSTRACTIVE_ENDPOINT.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cascade import CascadeConfig
from .embeddings import EmbeddingBackendConfig
from .errors import ConfigError
from .summarization import (
    ABSTRACTIVE,
    ABSTRACTIVE_PARAMS,
    EXTRACTIVE,
    EXTRACTIVE_PARAMS,
    GenerationParams,
    SummarizeConfig,
    SummarizerBackendConfig,
)
from .zero_shot import DEFAULT_NLI_MODEL, DEFAULT_TEMPERATURE

ENV_ENDPOINTS = {
    "embedding": "CQA_EMBEDDING_ENDPOINT",
    "zero_shot": "CQA_NLI_ENDPOINT",
    "extractive": "CQA_EXTRACTIVE_ENDPOINT",
    "abstractive": "CQA_ABSTRACTIVE_ENDPOINT",
}


@dataclass
class Paths:
    corpus: Path
    output_dir: Path
    rules: Path | None = None
    abbreviations: Path | None = None
    hypotheses: Path | None = None
    embedding_cache: Path | None = None

    @property
    def cache_dir(self) -> Path:
        return self.embedding_cache or self.output_dir / "embedding_cache"


@dataclass
class ZeroShotConfig:
    kind: str = "similarity"
    model_id: str = DEFAULT_NLI_MODEL
    endpoint: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    fallback: bool = True


@dataclass
class LabelModelConfig:
    epochs: int = 500
    seed: int = 42


@dataclass
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 20
    seed: int = 42
    train_source: str = "gold"


@dataclass
class PipelineConfig:
    paths: Paths
    embedding: EmbeddingBackendConfig = field(default_factory=EmbeddingBackendConfig)
    zero_shot: ZeroShotConfig = field(default_factory=ZeroShotConfig)
    extractive: SummarizerBackendConfig = field(default_factory=lambda: SummarizerBackendConfig(EXTRACTIVE))
    abstractive: SummarizerBackendConfig = field(default_factory=lambda: SummarizerBackendConfig(ABSTRACTIVE))
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    label_model: LabelModelConfig = field(default_factory=LabelModelConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    summarize: SummarizeConfig = field(default_factory=SummarizeConfig)
    metric_weights: dict[str, float] | None = None

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, label_model=replace(self.label_model, seed=seed), svm=replace(self.svm, seed=seed))

    def with_label_model_epochs(self, epochs: int) -> "PipelineConfig":
        return replace(self, label_model=replace(self.label_model, epochs=epochs))

    def fingerprint(self) -> str:
        """SHA-256 over every setting except locations, plus the contents of input files.

        Moving the output directory or the corpus does not change it; editing
        the corpus, rules, or any setting does.
        """
        settings = {
            "embedding": {k: v for k, v in asdict(self.embedding).items() if k not in ("endpoint", "cache_path")},
            "zero_shot": {k: v for k, v in asdict(self.zero_shot).items() if k != "endpoint"},
            "extractive": {k: v for k, v in asdict(self.extractive).items() if k != "endpoint"},
            "abstractive": {k: v for k, v in asdict(self.abstractive).items() if k != "endpoint"},
            "cascade": asdict(self.cascade),
            "label_model": asdict(self.label_model),
            "svm": asdict(self.svm),
            "summarize": asdict(self.summarize),
            "metric_weights": self.metric_weights,
            "inputs": {
                name: _file_digest(getattr(self.paths, name))
                for name in ("corpus", "rules", "abbreviations", "hypotheses")
            },
        }
        blob = json.dumps(settings, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _file_digest(path: Path | None) -> str | None:
    if path is None:
        return None
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _build(cls, values: dict, section: str, rename: dict | None = None, **extra):
    rename = rename or {}
    values = {rename.get(k, k): v for k, v in values.items()}
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**{**extra, **values})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from e


def _params(values: dict, defaults: GenerationParams, section: str) -> GenerationParams:
    names = {f.name for f in fields(GenerationParams)}
    chosen = {k: values.pop(k) for k in list(values) if k in names}
    try:
        return replace(defaults, **chosen)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from e


def parse_config(raw: dict, base_dir: Path, env: dict | None = None) -> PipelineConfig:
    env = os.environ if env is None else env
    known_sections = {"paths", "embedding", "zero_shot", "extractive", "abstractive", "cascade",
                      "label_model", "svm", "summarize", "metrics"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    p = _section(raw, "paths")
    if "corpus" not in p:
        raise ConfigError("[paths] corpus is required")

    def resolve(value):
        if value is None:
            return None
        path = Path(value).expanduser()
        return path if path.is_absolute() else (base_dir / path)

    paths = _build(Paths, {k: resolve(v) for k, v in p.items()}, "paths",
                   output_dir=base_dir / "artifacts")

    sections = {name: _section(raw, name) for name in known_sections}
    for name, var in ENV_ENDPOINTS.items():
        if env.get(var):
            sections[name]["endpoint"] = env[var]

    extractive_params = _params(sections["extractive"], EXTRACTIVE_PARAMS, "extractive")
    abstractive_params = _params(sections["abstractive"], ABSTRACTIVE_PARAMS, "abstractive")
    summarize = _build(SummarizeConfig, sections["summarize"], "summarize",
                       extractive=extractive_params, abstractive=abstractive_params)
    svm = _build(SvmConfig, sections["svm"], "svm", rename={"lambda": "lam"})
    if svm.train_source not in ("gold", "weak"):
        raise ConfigError("[svm] train_source must be 'gold' or 'weak'")
    zero_shot = _build(ZeroShotConfig, sections["zero_shot"], "zero_shot")
    if zero_shot.kind not in ("similarity", "external-model"):
        raise ConfigError("[zero_shot] kind must be 'similarity' or 'external-model'")

    weights = sections["metrics"].pop("weights", None)
    if sections["metrics"]:
        raise ConfigError(f"[metrics] unknown keys: {', '.join(sorted(sections['metrics']))}")

    cfg = PipelineConfig(
        paths=paths,
        embedding=_build(EmbeddingBackendConfig, sections["embedding"], "embedding"),
        zero_shot=zero_shot,
        extractive=_build(SummarizerBackendConfig, sections["extractive"], "extractive", stage=EXTRACTIVE),
        abstractive=_build(SummarizerBackendConfig, sections["abstractive"], "abstractive", stage=ABSTRACTIVE),
        cascade=_build(CascadeConfig, sections["cascade"], "cascade"),
        label_model=_build(LabelModelConfig, sections["label_model"], "label_model"),
        svm=svm,
        summarize=summarize,
        metric_weights=weights,
    )
    if cfg.label_model.epochs < 1:
        raise ConfigError("[label_model] epochs must be >= 1")
    return cfg


def load_config(path: str | Path, env: dict | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(raw, path.resolve().parent, env)
