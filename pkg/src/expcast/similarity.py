"""Statistical feature embedding, DTW and the composite similarity score.

The composite score mixes a feature-space cosine (``S_sem``) with a
DTW-based structural proximity (``S_str = exp(-dtw / tau)``)::

    S = alpha * S_sem + (1 - alpha) * S_str
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import as_vector
from .errors import ValidationError

SCHEMA_VERSION = "stat-v1"


def feature_names(p: int = 3) -> tuple[str, ...]:
    return (
        ("mean", "std", "slope")
        + tuple(f"acf_lag{k}" for k in range(1, p + 1))
        + ("min", "max", "skew")
    )


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    schema_version: str = SCHEMA_VERSION
    p: int = 3

    def __post_init__(self):
        if len(self.values) != len(feature_names(self.p)):
            raise ValidationError(
                f"feature vector has {len(self.values)} values, schema expects {len(feature_names(self.p))}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("feature vector contains non-finite values")

    @property
    def names(self) -> tuple[str, ...]:
        return feature_names(self.p)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> float:
        return self.as_dict()[name]

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class SimilarityConfig:
    alpha: float = 0.5
    dtw_tau: float = 1.0
    cosine_clamp: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.dtw_tau > 0:
            raise ValidationError(f"dtw_tau must be positive, got {self.dtw_tau}")


def _lag_corr(x: np.ndarray, k: int) -> float:
    # Pearson correlation of (x_t, x_{t+k}); zero-variance segments give 0.
    a, b = x[:-k], x[k:]
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den == 0.0:
        return 0.0
    return min(1.0, max(-1.0, float(np.dot(a, b)) / den))


def extract_features(x, p: int = 3) -> FeatureVector:
    x = as_vector(x, "series")
    n = x.size
    if n < 2:
        raise ValidationError("feature extraction needs at least 2 points")
    if n <= p:
        raise ValidationError(f"series length {n} must exceed autocorrelation depth {p}")
    mean = float(x.mean())
    centered = x - mean
    m2 = float(np.mean(centered**2))
    std = math.sqrt(m2)
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    slope = float(np.dot(tc, centered) / np.dot(tc, tc))
    acf = [_lag_corr(x, k) if n - k >= 2 else 0.0 for k in range(1, p + 1)]
    skew = float(np.mean(centered**3)) / m2**1.5 if m2 > 0 else 0.0
    return FeatureVector((mean, std, slope, *acf, float(x.min()), float(x.max()), skew), p=p)


def cosine_similarity(a: FeatureVector, b: FeatureVector, clamp: bool = True) -> float:
    if (a.schema_version, a.p) != (b.schema_version, b.p):
        raise ValidationError("feature vectors come from different schemas")
    u, v = a.array(), b.array()
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if np.array_equal(u, v):
        return 1.0
    cos = min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv)))
    return max(0.0, cos) if clamp else cos


@numba.njit(cache=True)
def _dtw_table(a, b):
    n, m = a.shape[0], b.shape[0]
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            c = abs(a[i] - b[j])
            if i == 0 and j == 0:
                D[i, j] = c
            elif i == 0:
                D[i, j] = c + D[i, j - 1]
            elif j == 0:
                D[i, j] = c + D[i - 1, j]
            else:
                best = D[i - 1, j - 1]
                if D[i - 1, j] < best:
                    best = D[i - 1, j]
                if D[i, j - 1] < best:
                    best = D[i, j - 1]
                D[i, j] = c + best
    return D[n - 1, m - 1]


def dtw_distance(a, b) -> float:
    """Full-window DTW with |a_i - b_j| local cost; returns total path cost."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    return float(_dtw_table(np.ascontiguousarray(a), np.ascontiguousarray(b)))


def structural_proximity(dtw: float, cfg: SimilarityConfig) -> float:
    if dtw < 0:
        raise ValidationError("dtw distance must be non-negative")
    return math.exp(-dtw / cfg.dtw_tau)


def combine(s_sem: float, s_str: float, alpha: float) -> float:
    return alpha * s_sem + (1.0 - alpha) * s_str


def composite_from_parts(
    xq: np.ndarray, fq: FeatureVector, xk: np.ndarray, fk: FeatureVector, cfg: SimilarityConfig
) -> float:
    """Composite score with precomputed features (used by the memory store)."""
    s_sem = cosine_similarity(fq, fk, clamp=cfg.cosine_clamp)
    s_str = structural_proximity(dtw_distance(xq, xk), cfg)
    return min(1.0, max(0.0, combine(s_sem, s_str, cfg.alpha)))


def composite_similarity(xq, xk, cfg: SimilarityConfig, p: int = 3) -> float:
    xq = as_vector(xq, "xq")
    xk = as_vector(xk, "xk")
    return composite_from_parts(xq, extract_features(xq, p), xk, extract_features(xk, p), cfg)


def calibrate_dtw_tau(series: list[np.ndarray], n_pairs: int = 100, seed: int = 0) -> float:
    """Median DTW over a seeded sample of distinct pairs; 1.0 if degenerate."""
    if len(series) < 2:
        return 1.0
    rng = np.random.default_rng(seed)
    dists = []
    for _ in range(n_pairs):
        i, j = rng.choice(len(series), size=2, replace=False)
        dists.append(dtw_distance(series[i], series[j]))
    tau = float(np.median(dists))
    return tau if tau > 0 else 1.0
