"""Canonical CSV datasets: ingestion from public layouts, loading, splitting.

The canonical layout is a single table with a header: an ISO-8601
``timestamp`` column, the endogenous target column and any covariate columns.
Row numbers in error messages count data rows from 1 (the header excluded).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .core import ForecastInstance, SplitSpec, make_windows
from .errors import IngestError, ValidationError

TIMESTAMP = "timestamp"


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str
    target_column: str
    covariate_columns: tuple[str, ...] = ()
    frequency: str = "1h"
    L: int = 168
    H: int = 24
    split: SplitSpec = field(default_factory=lambda: SplitSpec(0, 0, 0))
    stride: int | None = None  # None -> H
    target_description: str = ""

    def __post_init__(self):
        if self.L < 1 or self.H < 1:
            raise ValidationError("L and H must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ValidationError("stride must be >= 1")

    @property
    def effective_stride(self) -> int:
        return self.stride or self.H


def _first_bad_row(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + 1


def read_canonical(path, target: str, covariates: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"dataset file not found: {path}")
    df = pd.read_csv(path)
    for col in (TIMESTAMP, target, *covariates):
        if col not in df.columns:
            raise IngestError(f"column {col!r} missing from header of {path} (have {list(df.columns)})")
    df = df[[TIMESTAMP, target, *covariates]]
    values = df[[target, *covariates]].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        row = _first_bad_row(bad)
        cols = [c for c in values.columns if pd.isna(values.iloc[row - 1][c])]
        raise IngestError(f"missing or non-numeric value in {cols}", row=row)
    try:
        ts = pd.to_datetime(df[TIMESTAMP], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise IngestError(f"unparseable timestamp ({exc})") from None
    if ts.isna().any():
        raise IngestError("missing timestamp", row=_first_bad_row(ts.isna().to_numpy()))
    steps = ts.diff().to_numpy()[1:]
    if len(steps):
        nonpos = steps <= np.timedelta64(0)
        if nonpos.any():
            raise IngestError("timestamps not strictly increasing", row=_first_bad_row(nonpos) + 1)
        uneven = steps != steps[0]
        if uneven.any():
            raise IngestError("timestamp step changes", row=_first_bad_row(uneven) + 1)
    out = values.copy()
    out.insert(0, TIMESTAMP, ts.to_numpy())
    return out


def split_windows(
    data: np.ndarray, timestamps: np.ndarray, spec: DatasetSpec, covariate_names: Sequence[str], static: dict
) -> dict[str, list[ForecastInstance]]:
    """Window each split so its targets fall inside the split's rows.

    Lookbacks may reach back into earlier splits; targets never cross forward.
    """
    split = spec.split
    if split.total == 0:
        raise ValidationError("split sizes are all zero")
    if split.total > len(data):
        raise IngestError(f"split needs {split.total} rows, file has {len(data)}")
    L, H = spec.L, spec.H
    out = {}
    for name, (a, b) in split.bounds().items():
        s0 = max(a - L, 0)
        if b - s0 < L + H:
            out[name] = []
            continue
        out[name] = make_windows(
            data[s0:b],
            timestamps[s0:b],
            L,
            H,
            spec.effective_stride,
            target_col=0,
            covariate_names=covariate_names,
            static_context=static,
            id_prefix=f"{spec.name}@",
            base_offset=s0,
        )
    return out


def load_csv_dataset(spec: DatasetSpec) -> dict[str, list[ForecastInstance]]:
    df = read_canonical(spec.path, spec.target_column, spec.covariate_columns)
    static = {
        "dataset": spec.name,
        "frequency": spec.frequency,
        "target": spec.target_column,
    }
    if spec.target_description:
        static["target_description"] = spec.target_description
    data = df[[spec.target_column, *spec.covariate_columns]].to_numpy(dtype=float)
    ts = df[TIMESTAMP].to_numpy()
    return split_windows(data, ts, spec, spec.covariate_columns, static)


# -- ingestion ------------------------------------------------------------

INGEST_FORMATS = {
    # EPF benchmark files: date column first, then Price and exogenous forecasts
    "epf": {"target": "Price"},
    # ETT files: "date" column, load features, oil temperature "OT"
    "ett": {"target": "OT"},
    "canonical": {"target": None},
}


def ingest(
    fmt: str,
    source,
    output,
    target: str | None = None,
    covariates: Sequence[str] | None = None,
    rename: dict[str, str] | None = None,
) -> pd.DataFrame:
    """Convert a public dataset layout into the canonical CSV schema."""
    if fmt not in INGEST_FORMATS:
        raise ValidationError(f"unknown ingest format {fmt!r}; known: {sorted(INGEST_FORMATS)}")
    source = Path(source)
    if not source.exists():
        raise IngestError(f"source file not found: {source}")
    raw = pd.read_csv(source)
    raw.columns = [str(c).strip() for c in raw.columns]
    ts_col = TIMESTAMP if TIMESTAMP in raw.columns else raw.columns[0]
    target = target or INGEST_FORMATS[fmt]["target"]
    if target is None:
        raise ValidationError("canonical ingest needs an explicit target column")
    if target not in raw.columns:
        raise IngestError(f"target column {target!r} not in source header {list(raw.columns)}")
    if covariates is None:
        covariates = [c for c in raw.columns if c not in (ts_col, target)]
    for c in covariates:
        if c not in raw.columns:
            raise IngestError(f"covariate column {c!r} not in source header")
    df = raw[[ts_col, target, *covariates]].rename(columns={ts_col: TIMESTAMP})
    try:
        stamps = pd.to_datetime(df[TIMESTAMP], format="mixed", dayfirst=False)
    except (ValueError, TypeError) as exc:
        raise IngestError(f"unparseable timestamps in {ts_col!r} ({exc})") from None
    df[TIMESTAMP] = stamps.dt.strftime("%Y-%m-%dT%H:%M:%S")
    values = df[[target, *covariates]].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        raise IngestError("missing or non-numeric value (no imputation is performed)", row=_first_bad_row(bad))
    if rename:
        df = df.rename(columns=rename)
    df.to_csv(output, index=False)
    return df


def synthetic_regimes(
    n_rows: int = 2976, block: int = 96, noise: float = 0.1, seed: int = 0, start: str = "2020-01-01"
) -> pd.DataFrame:
    """Two sinusoidal regimes alternating every ``block`` hourly steps.

    Regime A: level 20, amplitude 5, period 24. Regime B: level 10,
    amplitude 2, period 12. A ``clock`` covariate carries the daily phase.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_rows)
    regime_a = (t // block) % 2 == 0
    a = 20 + 5 * np.sin(2 * np.pi * t / 24)
    b = 10 + 2 * np.sin(2 * np.pi * t / 12)
    value = np.where(regime_a, a, b) + rng.normal(0.0, noise, n_rows)
    stamps = pd.date_range(start, periods=n_rows, freq="h")
    return pd.DataFrame(
        {
            TIMESTAMP: stamps.strftime("%Y-%m-%dT%H:%M:%S"),
            "value": np.round(value, 6),
            "clock": np.round(np.sin(2 * np.pi * t / 24), 6),
        }
    )
