"""Pipeline configuration, stored as a flat YAML file."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .corpus_io import DEFAULT_COLUMNS
from .llm_validate import TOKEN_ENV_VAR

__all__ = ["ConfigError", "LlmConfig", "PipelineConfig", "builtin_lexicon_path"]

DEFAULT_MODEL = "nlptown/bert-base-multilingual-uncased-sentiment"


class ConfigError(ValueError):
    pass


def builtin_lexicon_path() -> Path:
    return Path(__file__).parent / "data" / "lexicon.tsv"


@dataclass
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    cache_path: str | None = None  # defaults to <output_dir>/llm_cache.jsonl
    mode: str = "fixture"
    token_env: str = TOKEN_ENV_VAR


@dataclass
class PipelineConfig:
    input_csv: str | None = None
    column_map: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    backend_spec: str = f"transformer:{DEFAULT_MODEL}"
    chunk_budget: int = 512
    histogram_bins: int = 20
    trend_range: list[int] | None = None
    top_n_journals: int = 20
    chart_format: str = "png"
    explained_quantity: str = "normalized_score"
    llm: LlmConfig = field(default_factory=LlmConfig)
    prompts: dict[str, str] = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    strict: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.llm, dict):
            self.llm = _build(LlmConfig, self.llm, "llm")
        if self.trend_range is not None:
            if len(self.trend_range) != 2:
                raise ConfigError("trend_range must be [year_from, year_to]")
            self.trend_range = [int(y) for y in self.trend_range]
            if self.trend_range[0] > self.trend_range[1]:
                raise ConfigError(f"empty trend_range {self.trend_range}")
        for name in ("chunk_budget", "histogram_bins", "top_n_journals", "jobs"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.llm.mode not in ("live", "fixture"):
            raise ConfigError(f"llm.mode must be 'live' or 'fixture', not {self.llm.mode!r}")
        if self.explained_quantity not in ("normalized_score", "probability_of_label"):
            raise ConfigError(f"unknown explained_quantity {self.explained_quantity!r}")

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def cache_path(self) -> Path:
        return Path(self.llm.cache_path) if self.llm.cache_path else self.out / "llm_cache.jsonl"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        return _build(cls, data, "config")

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(data)


def _build(cls, data: dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {where}: {exc}") from exc
