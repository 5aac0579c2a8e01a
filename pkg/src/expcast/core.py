"""Forecast instances, windowing, point metrics and the moving-average reference."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientLengthError, ValidationError

__all__ = [
    "ForecastInstance",
    "MetricPair",
    "SplitSpec",
    "as_vector",
    "evaluate",
    "mae",
    "make_windows",
    "moving_average_forecast",
    "mse",
]


def as_vector(values, name: str = "vector", allow_empty: bool = False) -> np.ndarray:
    """Coerce to a 1-D float array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _check_timestamps(ts: np.ndarray) -> None:
    if ts.size < 2:
        return
    steps = np.diff(ts)
    if np.any(steps <= steps.dtype.type(0)):
        raise ValidationError("timestamps must be strictly increasing")
    if np.any(steps != steps[0]):
        raise ValidationError("timestamps must have a constant step")


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split sizes, counted in time steps of the source table."""

    train_len: int
    val_len: int
    test_len: int

    def __post_init__(self):
        for name in ("train_len", "val_len", "test_len"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.train_len + self.val_len + self.test_len

    def bounds(self) -> dict[str, tuple[int, int]]:
        a = self.train_len
        b = a + self.val_len
        return {"train": (0, a), "val": (a, b), "test": (b, b + self.test_len)}


@dataclass(frozen=True)
class MetricPair:
    mse: float
    mae: float

    def __post_init__(self):
        if self.mse < 0 or self.mae < 0:
            raise ValidationError("metrics must be non-negative")


@dataclass(eq=False)
class ForecastInstance:
    """One lookback window with its context and (optionally) the target horizon.

    ``dynamic_history`` has one row per lookback step and ``dynamic_future``
    one row per horizon step; both have one column per covariate.
    ``offset`` is the source row where the lookback starts.
    """

    id: str
    lookback: np.ndarray
    horizon: int
    timestamps: np.ndarray
    dynamic_history: np.ndarray
    dynamic_future: np.ndarray
    static_context: Mapping[str, str] = field(default_factory=dict)
    target: np.ndarray | None = None
    covariate_names: tuple[str, ...] = ()
    offset: int = 0

    def __post_init__(self):
        self.lookback = as_vector(self.lookback, "lookback")
        L, H = self.lookback.size, int(self.horizon)
        if H < 1:
            raise ValidationError("horizon must be >= 1")
        if self.target is not None:
            self.target = as_vector(self.target, "target")
            if self.target.size != H:
                raise ValidationError(f"target length {self.target.size} != horizon {H}")
        self.timestamps = np.asarray(self.timestamps)
        if self.timestamps.size != L + H:
            raise ValidationError(f"expected {L + H} timestamps, got {self.timestamps.size}")
        _check_timestamps(self.timestamps)
        n_cov = len(self.covariate_names)
        self.dynamic_history = np.asarray(self.dynamic_history, dtype=float).reshape(L, n_cov)
        self.dynamic_future = np.asarray(self.dynamic_future, dtype=float).reshape(H, n_cov)

    @property
    def L(self) -> int:
        return self.lookback.size

    @property
    def H(self) -> int:
        return self.horizon

    @property
    def last_observation(self) -> float:
        return float(self.lookback[-1])

    @property
    def target_end(self) -> int:
        """Exclusive source row index of the last horizon step."""
        return self.offset + self.L + self.H


def make_windows(
    series,
    timestamps,
    L: int,
    H: int,
    stride: int,
    *,
    target_col: int = 0,
    covariate_names: Sequence[str] = (),
    static_context: Mapping[str, str] | None = None,
    id_prefix: str = "w",
    base_offset: int = 0,
) -> list[ForecastInstance]:
    """Slice a (time x column) matrix into chronological forecast instances.

    Column ``target_col`` is the endogenous series; every other column becomes
    dynamic context, in order. Values are copied untouched (no scaling).
    """
    data = np.asarray(series, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    ts = np.asarray(timestamps)
    n = data.shape[0]
    if ts.size != n:
        raise ValidationError(f"{ts.size} timestamps for {n} rows")
    if L < 1 or H < 1:
        raise ValidationError("L and H must be >= 1")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    if n < L + H:
        raise InsufficientLengthError(L + H, n)
    if not np.all(np.isfinite(data)):
        raise ValidationError("series contains non-finite values")
    _check_timestamps(ts)

    cov_idx = [c for c in range(data.shape[1]) if c != target_col]
    names = tuple(covariate_names) if covariate_names else tuple(f"cov{c}" for c in cov_idx)
    if len(names) != len(cov_idx):
        raise ValidationError(f"{len(names)} covariate names for {len(cov_idx)} covariate columns")
    static = dict(static_context or {})

    count = (n - L - H) // stride + 1
    out = []
    for i in range(count):
        s = i * stride
        target = data[s + L : s + L + H, target_col]
        cov = data[s : s + L + H][:, cov_idx]
        out.append(
            ForecastInstance(
                id=f"{id_prefix}{base_offset + s}",
                lookback=data[s : s + L, target_col].copy(),
                horizon=H,
                timestamps=ts[s : s + L + H].copy(),
                dynamic_history=cov[:L].copy(),
                dynamic_future=cov[L:].copy(),
                static_context=static,
                target=target.copy(),
                covariate_names=names,
                offset=base_offset + s,
            )
        )
    return out


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = as_vector(pred, "pred")
    t = as_vector(truth, "truth")
    if p.size != t.size:
        raise ValidationError(f"length mismatch: pred {p.size} vs truth {t.size}")
    return p, t


def mse(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.mean((p - t) ** 2))


def mae(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.mean(np.abs(p - t)))


def evaluate(pred, truth) -> MetricPair:
    return MetricPair(mse(pred, truth), mae(pred, truth))


def moving_average_forecast(lookback, H: int, window: int) -> np.ndarray:
    """Flat forecast: mean of the last ``window`` observations, repeated H times."""
    x = as_vector(lookback, "lookback")
    if window < 1:
        raise ValidationError("window must be >= 1")
    if window > x.size:
        raise ValidationError(f"window {window} exceeds lookback length {x.size}")
    if H < 1:
        raise ValidationError("H must be >= 1")
    return np.full(H, float(np.mean(x[-window:])))
