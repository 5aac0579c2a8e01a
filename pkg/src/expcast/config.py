"""Run configuration: defaults, named dataset presets, YAML files, CLI overrides.

Precedence, lowest first: built-in defaults, the dataset preset named by
``dataset.name``, the YAML config file, then command-line flags.
"""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .accumulation import AccumulationConfig
from .core import SplitSpec
from .data import DatasetSpec
from .errors import ConfigurationError
from .gateway import SamplingParams
from .inference import InferenceConfig
from .similarity import SimilarityConfig

SHORT_TERM = (168, 24)
LONG_TERM = (96, 96)

_EPF = SplitSpec(10224, 1584, 3024)
_HOURLY_LONG = SplitSpec(8544, 1344, 2544)
_QUARTER_HOURLY = SplitSpec(16896, 2496, 4896)

# name -> (target column, covariates, frequency, horizon preset, split, description)
DATASET_PRESETS: dict[str, tuple] = {
    "NP": ("Price", ("Grid load", "Wind power"), "1h", SHORT_TERM, _EPF, "Nord Pool electricity price"),
    "PJM": ("Price", ("System load", "Zonal COMED load"), "1h", SHORT_TERM, _EPF, "PJM electricity price"),
    "BE": ("Price", ("Generation", "System load"), "1h", SHORT_TERM, _EPF, "Belgian electricity price"),
    "FR": ("Price", ("Generation", "System load"), "1h", SHORT_TERM, _EPF, "French electricity price"),
    "DE": ("Price", ("Wind power", "Amprion zonal load"), "1h", SHORT_TERM, _EPF, "German electricity price"),
    "ETTh1": ("OT", ("HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL"), "1h", LONG_TERM, _HOURLY_LONG, "transformer oil temperature"),
    "ETTm1": ("OT", ("HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL"), "15min", LONG_TERM, _QUARTER_HOURLY, "transformer oil temperature"),
    "WP": ("power", (), "15min", LONG_TERM, _QUARTER_HOURLY, "wind power generation"),
    "SP": ("power", (), "15min", LONG_TERM, _QUARTER_HOURLY, "solar power generation"),
    "MOPEX": ("streamflow", (), "1D", LONG_TERM, _HOURLY_LONG, "daily streamflow discharge"),
    "synthetic": ("value", ("clock",), "1h", (96, 24), SplitSpec(2016, 0, 960), "synthetic two-regime signal"),
}


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    mock_script: str | None = None
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    reasoning_model: str = "gpt-5"
    summary_model: str | None = None
    audit_path: str | None = None
    max_attempts: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ConfigurationError(f"backend must be 'mock' or 'http', got {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    accumulation: AccumulationConfig = field(default_factory=AccumulationConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    backend: BackendConfig = field(default_factory=BackendConfig)
    seed: int = 0
    memory_path: str = "memory.jsonl"
    report_path: str = "report.jsonl"
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.backend.kind == "mock" and not self.backend.mock_script:
            raise ConfigurationError("mock backend requires a mock script (--mock-script)")
        if self.backend.kind == "http" and not (self.backend.base_url and self.backend.api_key_env):
            raise ConfigurationError("http backend requires base_url and api_key_env")
        return self

    @property
    def manifest_path(self) -> str:
        return str(Path(self.memory_path).with_suffix(".manifest.json"))


def dataset_from_preset(name: str, path: str | None = None) -> DatasetSpec:
    if name not in DATASET_PRESETS:
        raise ConfigurationError(f"unknown dataset preset {name!r}; known: {sorted(DATASET_PRESETS)}")
    target, covs, freq, (L, H), split, desc = DATASET_PRESETS[name]
    return DatasetSpec(
        name=name,
        path=path or f"{name}.csv",
        target_column=target,
        covariate_columns=covs,
        frequency=freq,
        L=L,
        H=H,
        split=split,
        target_description=desc,
    )


def default_config(dataset: str = "NP") -> RunConfig:
    return RunConfig(dataset=dataset_from_preset(dataset))


def _build(cls, values: dict, base):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} field(s): {sorted(unknown)}")
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid {cls.__name__}: {exc}") from None


def config_from_dict(doc: dict[str, Any]) -> RunConfig:
    doc = dict(doc or {})
    ds_doc = dict(doc.pop("dataset", {}) or {})
    base_ds = dataset_from_preset(ds_doc["name"]) if ds_doc.get("name") in DATASET_PRESETS else None
    if base_ds is None:
        if "name" not in ds_doc or "target_column" not in ds_doc:
            raise ConfigurationError("dataset needs a preset name or at least name and target_column")
        base_ds = DatasetSpec(name=ds_doc["name"], path="", target_column=ds_doc["target_column"])
    if "split" in ds_doc:
        split = ds_doc.pop("split")
        ds_doc["split"] = SplitSpec(**split) if isinstance(split, dict) else SplitSpec(*split)
    if "covariate_columns" in ds_doc:
        ds_doc["covariate_columns"] = tuple(ds_doc["covariate_columns"])
    cfg = RunConfig(dataset=_build(DatasetSpec, ds_doc, base_ds))
    sections = {
        "similarity": SimilarityConfig,
        "accumulation": AccumulationConfig,
        "inference": InferenceConfig,
        "sampling": SamplingParams,
        "backend": BackendConfig,
    }
    updates: dict[str, Any] = {}
    for key, cls in sections.items():
        if key in doc:
            updates[key] = _build(cls, dict(doc.pop(key) or {}), getattr(cfg, key))
    updates.update(doc)
    return _build(RunConfig, updates, cfg)


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping")
    return config_from_dict(doc)


def resolved(cfg: RunConfig) -> dict[str, Any]:
    """Plain-data view of a config, embedded in every artifact."""
    return asdict(cfg)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(resolved(cfg), sort_keys=True)
