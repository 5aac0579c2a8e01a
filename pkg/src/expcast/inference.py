"""Experience-conditioned forecasting over a test stream.

Per instance: retrieve patterns and wisdom, sample M trajectories, keep the one
most consistent with the retrieved wisdom, re-prompt with violation feedback
while general laws fail, then (optionally) reward the retrieved entries when
the forecast beats the moving-average baseline.
"""
from __future__ import annotations

import logging
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import ForecastInstance, mae, moving_average_forecast
from .errors import AnswerParseError, ConfigurationError, ExpcastError, ValidationError
from .gateway import Gateway, RetrievedText, build_forecast_prompt, parse_answer
from .laws import Violation, check_laws
from .memory import MemoryStore, RetrievalResult
from .report import RunReport
from .similarity import extract_features

logger = logging.getLogger(__name__)

__all__ = [
    "InferenceConfig",
    "InstanceOutcome",
    "Trajectory",
    "adapt_confidence",
    "check_laws",
    "explore_and_select",
    "reflect_loop",
    "run_test_stream",
    "score_trajectory_phi",
    "text_similarity",
]


@dataclass(frozen=True)
class InferenceConfig:
    k: int = 3
    M: int = 4
    max_retries: int = 3
    phi_pos_weight: float = 1.0
    phi_neg_weight: float = 1.0
    ma_window: int | None = None  # None -> horizon
    beta: float = 0.1
    use_pattern: bool = True
    use_wisdom: bool = True
    use_law: bool = True
    use_adapt: bool = True
    aggregate: str = "select"
    concurrency: int = 1
    hash_dim: int = 4096

    def __post_init__(self):
        if self.k < 1 or self.M < 1 or self.max_retries < 0:
            raise ValidationError("need k >= 1, M >= 1, max_retries >= 0")
        if self.phi_pos_weight < 0 or self.phi_neg_weight < 0:
            raise ValidationError("phi weights must be non-negative")
        if self.aggregate not in ("select", "mean"):
            raise ValidationError(f"aggregate must be 'select' or 'mean', got {self.aggregate!r}")
        if self.concurrency < 1:
            raise ValidationError("concurrency must be >= 1")


@dataclass
class Trajectory:
    sample_index: int
    rationale_text: str
    prediction: np.ndarray | None
    parse_error: str | None = None
    reprompted: bool = False


@dataclass
class Retrieved:
    patterns: list[RetrievalResult] = field(default_factory=list)
    wisdom_pos: list[RetrievalResult] = field(default_factory=list)
    wisdom_neg: list[RetrievalResult] = field(default_factory=list)

    def ids(self) -> list[int]:
        return [r.entry_id for r in (*self.patterns, *self.wisdom_pos, *self.wisdom_neg)]

    def audit(self) -> dict[str, list]:
        return {
            kind: [[r.entry_id, r.similarity, r.adjusted_score] for r in items]
            for kind, items in (("pattern", self.patterns), ("wisdom_pos", self.wisdom_pos), ("wisdom_neg", self.wisdom_neg))
        }


@dataclass
class Exploration:
    prediction: np.ndarray
    trajectories: list[Trajectory]
    phi_scores: list[float | None]
    selected_index: int
    fallback: bool


@dataclass
class InstanceOutcome:
    instance_id: str
    final_prediction: np.ndarray
    selected_trajectory: int
    phi_scores: list[float | None]
    retries_used: int
    rounds: int
    laws_satisfied: bool
    violations: list[Violation] = field(default_factory=list)
    llm_loss: float | None = None
    ma_loss: float | None = None
    ma_prediction: np.ndarray | None = None
    confidence_bumped_ids: list[int] = field(default_factory=list)
    retrieved: Retrieved = field(default_factory=Retrieved)
    fallback: bool = False
    parse_failures: int = 0
    rationale_text: str = ""

    def record(self, truth=None) -> dict:
        return {
            "id": self.instance_id,
            "prediction": [float(v) for v in self.final_prediction],
            "truth": None if truth is None else [float(v) for v in truth],
            "ma_prediction": None if self.ma_prediction is None else [float(v) for v in self.ma_prediction],
            "selected_trajectory": self.selected_trajectory,
            "phi_scores": self.phi_scores,
            "retries_used": self.retries_used,
            "rounds": self.rounds,
            "laws_satisfied": self.laws_satisfied,
            "violations": [asdict(v) for v in self.violations],
            "llm_loss": self.llm_loss,
            "ma_loss": self.ma_loss,
            "confidence_bumped_ids": list(self.confidence_bumped_ids),
            "retrieved": self.retrieved.audit(),
            "fallback": self.fallback,
            "parse_failures": self.parse_failures,
        }


# -- phi ------------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def _hashed_counts(text: str, dim: int) -> np.ndarray:
    v = np.zeros(dim)
    for tok in _TOKEN.findall(text.lower()):
        v[zlib.crc32(tok.encode()) % dim] += 1.0
    return v


def text_similarity(a: str, b: str, dim: int = 4096) -> float:
    """Cosine between hashed token-frequency vectors of two texts."""
    u, v = _hashed_counts(a, dim), _hashed_counts(b, dim)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if np.array_equal(u, v):
        return 1.0
    return float(np.dot(u, v)) / (nu * nv)


def score_trajectory_phi(
    trajectory_text: str, pos_wisdom: Sequence[str], neg_wisdom: Sequence[str], cfg: InferenceConfig
) -> float:
    pos = max((text_similarity(trajectory_text, w, cfg.hash_dim) for w in pos_wisdom), default=0.0)
    neg = max((text_similarity(trajectory_text, w, cfg.hash_dim) for w in neg_wisdom), default=0.0)
    return cfg.phi_pos_weight * pos - cfg.phi_neg_weight * neg


# -- exploration ----------------------------------------------------------


def retrieve_context(
    instance: ForecastInstance, memory: MemoryStore, cfg: InferenceConfig, exclude: Sequence[int] = ()
) -> Retrieved:
    out = Retrieved()
    if cfg.use_pattern:
        out.patterns = memory.retrieve(instance.lookback, "pattern", cfg.k, cfg.beta, exclude=exclude)
    if cfg.use_wisdom:
        out.wisdom_pos = memory.retrieve(instance.lookback, "wisdom_pos", cfg.k, cfg.beta, exclude=exclude)
        out.wisdom_neg = memory.retrieve(instance.lookback, "wisdom_neg", cfg.k, cfg.beta, exclude=exclude)
    return out


def _texts(memory: MemoryStore, results: Sequence[RetrievalResult]) -> list[RetrievedText]:
    return [RetrievedText(r.entry_id, r.similarity, memory.get(r.entry_id).summary_text) for r in results]


def _sample(gateway: Gateway, bundle, m: int, H: int) -> Trajectory:
    reply = gateway.complete(bundle, sample_index=m)
    try:
        return Trajectory(m, reply.rationale_text, parse_answer(reply.rationale_text, H))
    except AnswerParseError as first:
        logger.info("sample %d of %s unparseable (%s); re-prompting once", m, bundle.tag, first)
        retry = gateway.complete(bundle.with_parse_notice(str(first)), sample_index=m)
        try:
            return Trajectory(m, retry.rationale_text, parse_answer(retry.rationale_text, H), reprompted=True)
        except AnswerParseError as second:
            return Trajectory(m, retry.rationale_text, None, str(second), reprompted=True)


def explore_and_select(
    instance: ForecastInstance,
    memory: MemoryStore,
    gateway: Gateway,
    cfg: InferenceConfig,
    retrieved: Retrieved | None = None,
    violations: Sequence[Violation] | None = None,
) -> Exploration:
    """Sample M trajectories for one prompt and keep the argmax-phi forecast."""
    retrieved = retrieved if retrieved is not None else retrieve_context(instance, memory, cfg)
    laws = memory.laws if cfg.use_law else []
    pos = _texts(memory, retrieved.wisdom_pos)
    neg = _texts(memory, retrieved.wisdom_neg)
    bundle = build_forecast_prompt(
        instance,
        _texts(memory, retrieved.patterns),
        pos,
        neg,
        laws,
        extract_features(instance.lookback, memory.p),
        violations=violations,
    )
    H = instance.H
    if cfg.concurrency > 1 and cfg.M > 1 and gateway.concurrent_safe:
        with ThreadPoolExecutor(max_workers=min(cfg.concurrency, cfg.M)) as pool:
            trajectories = list(pool.map(lambda m: _sample(gateway, bundle, m, H), range(cfg.M)))
    else:
        trajectories = [_sample(gateway, bundle, m, H) for m in range(cfg.M)]

    pos_texts = [t.text for t in pos]
    neg_texts = [t.text for t in neg]
    phi: list[float | None] = [
        score_trajectory_phi(t.rationale_text, pos_texts, neg_texts, cfg) if t.prediction is not None else None
        for t in trajectories
    ]
    parsed = [i for i, s in enumerate(phi) if s is not None]
    if not parsed:
        logger.warning("no parseable trajectory for %s; falling back to moving average", instance.id)
        window = cfg.ma_window or H
        return Exploration(moving_average_forecast(instance.lookback, H, min(window, instance.L)), trajectories, phi, -1, True)
    best = max(parsed, key=lambda i: (phi[i], -i))
    if cfg.aggregate == "mean":
        prediction = np.mean([trajectories[i].prediction for i in parsed], axis=0)
    else:
        prediction = trajectories[best].prediction
    return Exploration(np.asarray(prediction, dtype=float), trajectories, phi, best, False)


def reflect_loop(
    instance: ForecastInstance,
    memory: MemoryStore,
    gateway: Gateway,
    cfg: InferenceConfig,
    exclude: Sequence[int] = (),
) -> InstanceOutcome:
    """Explore, then re-explore with violation feedback until laws hold or retries run out."""
    retrieved = retrieve_context(instance, memory, cfg, exclude)
    laws = memory.laws if cfg.use_law else []
    violations: list[Violation] = []
    retries = 0
    parse_failures = 0
    while True:
        exp = explore_and_select(instance, memory, gateway, cfg, retrieved, violations or None)
        parse_failures += sum(1 for t in exp.trajectories if t.prediction is None)
        violations = check_laws(exp.prediction, instance.last_observation, laws) if laws else []
        if not violations or retries >= cfg.max_retries:
            break
        retries += 1
        logger.info("%s violates %d law checks; reflection round %d", instance.id, len(violations), retries)
    if violations:
        logger.warning("%s still violates laws after %d retries", instance.id, retries)
    return InstanceOutcome(
        instance_id=instance.id,
        final_prediction=exp.prediction,
        selected_trajectory=exp.selected_index,
        phi_scores=exp.phi_scores,
        retries_used=retries,
        rounds=retries + 1,
        laws_satisfied=not violations,
        violations=violations,
        retrieved=retrieved,
        fallback=exp.fallback,
        parse_failures=parse_failures,
        rationale_text="" if exp.fallback else exp.trajectories[exp.selected_index].rationale_text,
    )


def adapt_confidence(
    outcome: InstanceOutcome, truth, instance: ForecastInstance, memory: MemoryStore, cfg: InferenceConfig
) -> InstanceOutcome:
    """Score against the MA baseline; on a strict win, bump the retrieved entries."""
    window = min(cfg.ma_window or instance.H, instance.L)
    ma_pred = moving_average_forecast(instance.lookback, instance.H, window)
    outcome.ma_prediction = ma_pred
    outcome.llm_loss = mae(outcome.final_prediction, truth)
    outcome.ma_loss = mae(ma_pred, truth)
    if cfg.use_adapt and outcome.llm_loss < outcome.ma_loss:
        ids = outcome.retrieved.ids()
        if ids:
            memory.bump_confidence(ids)
        outcome.confidence_bumped_ids = ids
    return outcome


def _process(instance, memory, gateway, cfg) -> InstanceOutcome:
    outcome = reflect_loop(instance, memory, gateway, cfg)
    if instance.target is not None:
        adapt_confidence(outcome, instance.target, instance, memory, cfg)
    return outcome


def run_test_stream(
    test_instances: Sequence[ForecastInstance],
    memory: MemoryStore,
    gateway: Gateway,
    cfg: InferenceConfig,
    config_stamp: dict | None = None,
    workers: int = 1,
) -> RunReport:
    """Forecast a chronological stream; confidence bumps apply in stream order.

    ``workers > 1`` parallelises across instances, which is only allowed when
    adaptation is off (otherwise it is ignored).
    """
    memory.freeze()
    report = RunReport(config=config_stamp or {})
    report.notes.append("metrics computed on the endogenous target channel only")

    def run_one(inst):
        try:
            return inst, _process(inst, memory, gateway, cfg), None
        except ConfigurationError:
            raise
        except ExpcastError as exc:
            logger.error("instance %s failed: %s", inst.id, exc)
            return inst, None, exc

    instances = list(test_instances)
    if workers > 1 and not cfg.use_adapt:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, instances))
    else:
        results = [run_one(inst) for inst in instances]
    for inst, outcome, error in results:
        if outcome is None:
            report.excluded.append({"id": inst.id, "error": str(error), "error_type": type(error).__name__})
        else:
            report.records.append(outcome.record(inst.target))
    return report
