import numpy as np

from expcast.core import ForecastInstance, make_windows
from expcast.data import synthetic_regimes


def hourly(n, start="2021-01-01"):
    return np.arange(np.datetime64(start), np.datetime64(start) + np.timedelta64(n, "h"), np.timedelta64(1, "h"))


def instance(lookback, H=3, target=None, iid="x", covariates=None):
    lookback = np.asarray(lookback, dtype=float)
    L = lookback.size
    cov = np.zeros((L + H, 0)) if covariates is None else np.asarray(covariates, dtype=float)
    names = tuple(f"c{i}" for i in range(cov.shape[1]))
    return ForecastInstance(
        id=iid,
        lookback=lookback,
        horizon=H,
        timestamps=hourly(L + H),
        dynamic_history=cov[:L],
        dynamic_future=cov[L:],
        static_context={"target_description": "test signal"},
        target=None if target is None else np.asarray(target, dtype=float),
        covariate_names=names,
    )


def synthetic_windows(L=96, H=24, seed=0, n_rows=2976):
    df = synthetic_regimes(n_rows=n_rows, seed=seed)
    data = df[["value", "clock"]].to_numpy()
    ts = df["timestamp"].to_numpy().astype("datetime64[s]")
    return make_windows(data, ts, L, H, H, covariate_names=("clock",), id_prefix="s")
