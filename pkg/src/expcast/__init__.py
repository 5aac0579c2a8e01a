"""Memory-driven time series forecasting with LLM backends.

Experience accumulated on a training split (pattern summaries, distilled
reasoning lessons and general laws) conditions, selects and validates
LLM-generated forecasts on the test stream.
"""
from .core import ForecastInstance, MetricPair, SplitSpec, mae, make_windows, moving_average_forecast, mse
from .errors import ExpcastError, TransportError, ValidationError
from .memory import MemoryStore
from .similarity import SimilarityConfig, composite_similarity, dtw_distance, extract_features

__version__ = "0.1.0"

__all__ = [
    "ExpcastError",
    "ForecastInstance",
    "MemoryStore",
    "MetricPair",
    "SimilarityConfig",
    "SplitSpec",
    "TransportError",
    "ValidationError",
    "composite_similarity",
    "dtw_distance",
    "extract_features",
    "mae",
    "make_windows",
    "moving_average_forecast",
    "mse",
]
