"""Experience accumulation over the training split.

Three stages fill a :class:`~expcast.memory.MemoryStore`:

1. pattern abstraction: each training lookback is stored next to a text
   summary of the future that followed it;
2. wisdom distillation: a forecasting sweep over the training split is split
   by an error threshold into successes and failures, grouped by anchor
   similarity, and distilled into lessons that pass the replace / merge /
   preserve filter;
3. law induction: clustered feature descriptions are turned into structured
   constraints and compiled.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from .core import ForecastInstance, mae
from .errors import ConfigurationError, ExpcastError, LawCompileError, TransportError, ValidationError
from .gateway import Gateway, build_fusion_prompt, build_law_prompt, build_summary_prompt, build_wisdom_prompt
from .inference import InferenceConfig, reflect_loop
from .laws import GeneralLaw, compile_law
from .memory import MemoryStore
from .similarity import FeatureVector, SimilarityConfig, calibrate_dtw_tau, extract_features

logger = logging.getLogger(__name__)

__all__ = [
    "AccumulationConfig",
    "TrajectoryRecord",
    "abstract_patterns",
    "accumulate",
    "compile_law",
    "distill_wisdom",
    "induce_laws",
    "merge_laws",
    "partition",
    "textualize_features",
]


@dataclass(frozen=True)
class AccumulationConfig:
    error_tau: float | None = None  # None -> quantile of the training sweep errors
    error_quantile: float = 0.5
    law_cluster_count: int = 5
    law_samples_per_cluster: int = 4
    wisdom_cluster_count: int = 4
    wisdom_group_size: int = 8
    tau_pairs: int = 100
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.error_tau is not None and not self.error_tau > 0:
            raise ValidationError("error_tau must be positive")
        if not 0 < self.error_quantile < 1:
            raise ValidationError("error_quantile must lie in (0, 1)")
        if min(self.law_cluster_count, self.law_samples_per_cluster, self.wisdom_cluster_count, self.wisdom_group_size) < 1:
            raise ValidationError("cluster counts and group sizes must be >= 1")


@dataclass
class TrajectoryRecord:
    instance_id: str
    rationale_text: str
    prediction: np.ndarray
    error: float
    polarity: str = ""
    anchor: np.ndarray | None = None


_FEATURE_LABELS = {
    "mean": "mean",
    "std": "standard deviation",
    "slope": "trend slope",
    "min": "minimum",
    "max": "maximum",
    "skew": "skewness",
}


def textualize_features(fv: FeatureVector) -> str:
    parts = []
    for name, value in fv.as_dict().items():
        if name.startswith("acf_lag"):
            label = f"lag-{name[len('acf_lag'):]} autocorrelation"
        else:
            label = _FEATURE_LABELS[name]
        parts.append(f"{label} {value:.4f}")
    return "The series has " + ", ".join(parts) + "."


def _map(fn, items, workers: int, gateway: Gateway):
    if workers > 1 and gateway.concurrent_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- patterns -------------------------------------------------------------


def abstract_patterns(
    train_instances: Sequence[ForecastInstance], memory: MemoryStore, gateway: Gateway, workers: int = 1
) -> list[int]:
    """Store (lookback, summary of target) pairs; failed summaries are skipped."""
    for inst in train_instances:
        if inst.target is None:
            raise ValidationError(f"training instance {inst.id} has no target")

    failures: list[ExpcastError] = []

    def summarize(inst):
        try:
            return gateway.complete(build_summary_prompt(inst.target, tag=inst.id)).rationale_text.strip()
        except ConfigurationError:
            raise
        except ExpcastError as exc:
            logger.warning("summary for %s failed (%s); skipping", inst.id, exc)
            failures.append(exc)
            return None

    summaries = _map(summarize, train_instances, workers, gateway)
    if train_instances and not any(summaries) and failures and all(isinstance(e, TransportError) for e in failures):
        raise TransportError(f"every pattern summary failed at the transport layer (last: {failures[-1]})")
    ids = []
    for inst, text in zip(train_instances, summaries):
        if text:
            ids.append(memory.insert_pattern(inst.lookback, text, provenance=(inst.id,)))
    return ids


# -- wisdom ---------------------------------------------------------------


def partition(records: Sequence[TrajectoryRecord], error_tau: float):
    """Successes have error < tau; everything else is a failure."""
    pos, neg = [], []
    for r in records:
        r.polarity = "pos" if r.error < error_tau else "neg"
        (pos if r.polarity == "pos" else neg).append(r)
    return pos, neg


def training_sweep(
    train_instances: Sequence[ForecastInstance],
    memory: MemoryStore,
    gateway: Gateway,
    inference_cfg: InferenceConfig,
    workers: int = 1,
) -> list[TrajectoryRecord]:
    """One raw forecast per training instance (M = 1, no reflection, no wisdom)."""
    cfg = replace(inference_cfg, M=1, max_retries=0, use_wisdom=False, use_law=False, use_adapt=False, concurrency=1)
    own = {}
    for e in memory.entries("pattern"):
        for src in e.provenance:
            own.setdefault(src, []).append(e.id)

    def run(inst):
        try:
            out = reflect_loop(inst, memory, gateway, cfg, exclude=own.get(inst.id, ()))
        except ConfigurationError:
            raise
        except ExpcastError as exc:
            logger.warning("training forecast for %s failed (%s); skipping", inst.id, exc)
            return None
        return None if out.fallback else out

    outcomes = _map(run, train_instances, workers, gateway)
    records = []
    for inst, out in zip(train_instances, outcomes):
        if out is None:
            continue
        records.append(
            TrajectoryRecord(
                inst.id, out.rationale_text, out.final_prediction, mae(out.final_prediction, inst.target), anchor=inst.lookback
            )
        )
    return records


def resolve_error_tau(records: Sequence[TrajectoryRecord], cfg: AccumulationConfig) -> dict:
    if cfg.error_tau is not None:
        return {"method": "fixed", "value": float(cfg.error_tau)}
    if not records:
        raise ValidationError("cannot resolve error_tau: no training trajectories")
    value = float(np.quantile([r.error for r in records], cfg.error_quantile))
    return {"method": "quantile", "quantile": cfg.error_quantile, "value": value, "metric": "mae"}


def _zscore(rows: np.ndarray) -> np.ndarray:
    mu = rows.mean(axis=0)
    sd = rows.std(axis=0)
    sd[sd == 0] = 1.0
    return (rows - mu) / sd


def _clusters(features: np.ndarray, n_clusters: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Labels and per-point distance to the own centroid (z-scored space)."""
    z = _zscore(features)
    n_clusters = min(n_clusters, len(np.unique(z, axis=0)))
    if n_clusters <= 1:
        centre = z.mean(axis=0)
        return np.zeros(len(z), dtype=int), np.linalg.norm(z - centre, axis=1)
    km = KMeans(n_clusters=n_clusters, n_init=10, random_state=seed).fit(z)
    dist = np.linalg.norm(z - km.cluster_centers_[km.labels_], axis=1)
    return km.labels_, dist


def _wisdom_text(reply: str) -> str:
    return reply.strip()


def distill_wisdom(
    train_instances: Sequence[ForecastInstance],
    memory: MemoryStore,
    gateway: Gateway,
    cfg: AccumulationConfig,
    inference_cfg: InferenceConfig,
) -> dict:
    records = training_sweep(train_instances, memory, gateway, inference_cfg, cfg.workers)
    tau = resolve_error_tau(records, cfg)
    pos, neg = partition(records, tau["value"])

    def fuse(a: str, b: str) -> str:
        return gateway.complete(build_fusion_prompt(a, b)).rationale_text.strip()

    outcomes = {"inserted": 0, "merged": 0, "replaced": 0}
    for polarity, group in (("pos", pos), ("neg", neg)):
        if not group:
            logger.info("no %s trajectories; that wisdom set stays empty", polarity)
            continue
        feats = np.array([extract_features(r.anchor, memory.p).values for r in group])
        labels, dist = _clusters(feats, cfg.wisdom_cluster_count, cfg.seed)
        for c in sorted(set(labels.tolist())):
            members = [i for i in np.argsort(dist, kind="stable") if labels[i] == c][: cfg.wisdom_group_size]
            batch = [group[i] for i in members]
            try:
                reply = gateway.complete(build_wisdom_prompt(batch, polarity, tau["value"], tag=f"{polarity}{c}"))
            except ConfigurationError:
                raise
            except ExpcastError as exc:
                logger.warning("wisdom distillation for %s cluster %d failed: %s", polarity, c, exc)
                continue
            out = memory.insert_wisdom_filtered(
                f"wisdom_{polarity}",
                batch[0].anchor,
                _wisdom_text(reply.rationale_text),
                fuse,
                provenance=tuple(r.instance_id for r in batch),
            )
            outcomes[out.action] += 1
    return {
        "error_tau": tau,
        "trajectories": len(records),
        "pos": len(pos),
        "neg": len(neg),
        "filter_outcomes": outcomes,
        "grouping": "k-means clusters of anchor features per polarity, members nearest the centroid first",
    }


# -- laws -----------------------------------------------------------------

_LAWS_BLOCK = re.compile(r"<laws>(.*?)</laws>", re.DOTALL | re.IGNORECASE)


def parse_law_reply(reply: str) -> tuple[list[GeneralLaw], list[dict]]:
    """Compile every structured record in a reply; report what was rejected."""
    blocks = _LAWS_BLOCK.findall(reply)
    body = blocks[-1] if blocks else reply
    laws, rejected = [], []
    for line in body.splitlines():
        line = line.strip().rstrip(",")
        if not line:
            continue
        if not line.startswith("{"):
            if blocks:
                rejected.append({"text": line, "reason": "not a structured law record"})
            continue
        try:
            laws.append(compile_law(json.loads(line), description=line))
        except json.JSONDecodeError as exc:
            rejected.append({"text": line, "reason": f"invalid JSON: {exc.msg}"})
        except LawCompileError as exc:
            rejected.append({"text": line, "reason": str(exc)})
    if not laws and not rejected:
        rejected.append({"text": reply.strip()[:200], "reason": "no parseable law record"})
    return laws, rejected


def merge_laws(laws: Sequence[GeneralLaw]) -> list[GeneralLaw]:
    """Collapse per-cluster laws so they cannot contradict each other.

    Ranges merge to their hull; step limits keep the loosest value per
    reference mode; duplicates of non-negativity collapse to one.
    """
    out: list[GeneralLaw] = []
    ranges = [l for l in laws if l.law_type == "range"]
    if any(l.law_type == "non_negativity" for l in laws):
        out.append(GeneralLaw(0, "non_negativity", {}, "; ".join(l.description_text for l in laws if l.law_type == "non_negativity")))
    if ranges:
        lo = min(l.params["lo"] for l in ranges)
        hi = max(l.params["hi"] for l in ranges)
        out.append(GeneralLaw(0, "range", {"lo": lo, "hi": hi}, "; ".join(l.description_text for l in ranges)))
    for ref in ("vs_last_observation", "vs_previous_prediction"):
        steps = [l for l in laws if l.law_type == "max_step" and l.params["reference"] == ref]
        if steps:
            limit = max(l.params["limit"] for l in steps)
            out.append(GeneralLaw(0, "max_step", {"limit": limit, "reference": ref}, "; ".join(l.description_text for l in steps)))
    return out


def fallback_laws(train_instances: Sequence[ForecastInstance]) -> list[GeneralLaw]:
    values = np.concatenate([np.concatenate([i.lookback, i.target]) for i in train_instances])
    lo = float(values.min() - 3 * values.std())
    hi = float(values.max() + 3 * values.std())
    return [GeneralLaw(0, "range", {"lo": lo, "hi": hi}, "fallback: training range widened by three standard deviations")]


def induce_laws(
    train_instances: Sequence[ForecastInstance], memory: MemoryStore, gateway: Gateway, cfg: AccumulationConfig
) -> dict:
    if not train_instances:
        raise ValidationError("law induction needs a non-empty training split")
    full = [np.concatenate([i.lookback, i.target]) for i in train_instances]
    fvs = [extract_features(x, memory.p) for x in full]
    labels, dist = _clusters(np.array([f.values for f in fvs]), cfg.law_cluster_count, cfg.seed)
    compiled: list[GeneralLaw] = []
    rejected: list[dict] = []
    for c in sorted(set(labels.tolist())):
        members = [i for i in np.argsort(dist, kind="stable") if labels[i] == c][: cfg.law_samples_per_cluster]
        texts = [textualize_features(fvs[i]) for i in members]
        try:
            reply = gateway.complete(build_law_prompt(texts, tag=f"law{c}"))
        except ConfigurationError:
            raise
        except ExpcastError as exc:
            logger.warning("law induction for cluster %d failed: %s", c, exc)
            continue
        laws, bad = parse_law_reply(reply.rationale_text)
        compiled.extend(laws)
        for r in bad:
            logger.info("rejected law from cluster %d: %s (%s)", c, r["text"], r["reason"])
            rejected.append({"cluster": c, **r})
    merged = merge_laws(compiled)
    used_fallback = not merged
    if used_fallback:
        logger.warning("no compilable law induced; using fallback range law")
        merged = fallback_laws(train_instances)
    for law in merged:
        memory.add_law(law)
    return {
        "compiled": len(compiled),
        "stored": [{"id": l.id, **l.to_record()} for l in merged],
        "rejected": rejected,
        "fallback": used_fallback,
    }


# -- pipeline -------------------------------------------------------------


def accumulate(
    train_instances: Sequence[ForecastInstance],
    memory: MemoryStore,
    gateway: Gateway,
    cfg: AccumulationConfig,
    inference_cfg: InferenceConfig,
) -> dict:
    """Run all three stages; returns the accumulation manifest."""
    if memory.phase != "train":
        raise ValidationError("accumulation requires a store in the training phase")
    train_instances = list(train_instances)
    tau = calibrate_dtw_tau([i.lookback for i in train_instances], cfg.tau_pairs, cfg.seed)
    memory.similarity = SimilarityConfig(memory.similarity.alpha, tau, memory.similarity.cosine_clamp)
    pattern_ids = abstract_patterns(train_instances, memory, gateway, cfg.workers)
    wisdom = distill_wisdom(train_instances, memory, gateway, cfg, inference_cfg)
    laws = induce_laws(train_instances, memory, gateway, cfg)
    return {
        "accumulation_config": asdict(cfg),
        "dtw_tau": tau,
        "train_instances": len(train_instances),
        "patterns_skipped": len(train_instances) - len(pattern_ids),
        "max_source_offset": max((i.target_end - 1 for i in train_instances), default=-1),
        "wisdom": wisdom,
        "laws": laws,
        "counts": memory.counts(),
        "error_metric": "mae",
    }
