"""Prompt assembly and answer parsing.

Every builder is a pure function of its inputs; numbers are always written
with four decimals so identical inputs give byte-identical prompts.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import AnswerParseError
from ..laws import GeneralLaw, Violation, fmt_bound
from ..similarity import FeatureVector

PRECISION = 4

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)


def fmt(v: float) -> str:
    return f"{v:.{PRECISION}f}"


def fmt_vector(values) -> str:
    return ", ".join(fmt(float(v)) for v in values)


def render_answer(values) -> str:
    return f"<answer>{fmt_vector(values)}</answer>"


@dataclass(frozen=True)
class PromptBundle:
    task: str
    role_block: str
    context_block: str
    instruction: str
    memory_block: str = ""
    feedback_block: str | None = None
    answer_contract: int | None = None
    parse_notice: str | None = None
    tag: str = ""  # caller bookkeeping (e.g. instance id); not sent to the model

    def user_text(self) -> str:
        parts = []
        if self.memory_block:
            parts.append(self.memory_block)
        parts.append(self.context_block)
        if self.feedback_block:
            parts.append(self.feedback_block)
        parts.append(self.instruction)
        if self.parse_notice:
            parts.append(self.parse_notice)
        return "\n\n".join(parts)

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.role_block},
            {"role": "user", "content": self.user_text()},
        ]

    def text(self) -> str:
        return self.role_block + "\n\n" + self.user_text()

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()

    def with_parse_notice(self, error: str) -> "PromptBundle":
        return replace(
            self,
            parse_notice=(
                f"NOTE: your previous reply could not be used ({error}). Reply again and end with "
                f"exactly {self.answer_contract} comma-separated numbers inside <answer>...</answer>."
            ),
        )


def parse_answer(reply_text: str, H: int) -> np.ndarray:
    """Numbers from the last ``<answer>`` block; exactly H finite values."""
    blocks = _ANSWER_RE.findall(reply_text or "")
    if not blocks:
        raise AnswerParseError("no answer block")
    body = blocks[-1].strip().strip("[]()")
    tokens = [t for t in re.split(r"[,\s;]+", body) if t]
    values = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise AnswerParseError(f"non-numeric token {tok!r}") from None
        if not math.isfinite(v):
            raise AnswerParseError(f"non-finite token {tok!r}")
        values.append(v)
    if len(values) != H:
        raise AnswerParseError(f"expected {H} values, found {len(values)}")
    return np.asarray(values, dtype=float)


# -- descriptions ---------------------------------------------------------


def describe_shape(fv: FeatureVector, n: int) -> str:
    """Deterministic morphological description of a window from its features."""
    f = fv.as_dict()
    std, mean = f["std"], f["mean"]
    if std == 0:
        return "Flat, constant series with no volatility."
    drift = f["slope"] * (n - 1) / std
    if drift > 1.0:
        trend = "Upward trend"
    elif drift < -1.0:
        trend = "Downward trend"
    elif f["acf_lag1"] < 0.3:
        trend = "Trendless, noisy level"
    else:
        trend = "Oscillating, broadly stationary level"
    cv = std / abs(mean) if mean != 0 else math.inf
    vol = "high" if cv > 0.25 else "moderate" if cv > 0.08 else "low"
    if f["acf_lag1"] > 0.8:
        memory = "smooth, strongly persistent dynamics"
    elif f["acf_lag1"] > 0.3:
        memory = "moderately persistent dynamics"
    else:
        memory = "weakly persistent, choppy dynamics"
    skew = f["skew"]
    tail = "upward spikes" if skew > 0.5 else "downward dips" if skew < -0.5 else "symmetric swings"
    return f"{trend} with {vol} volatility, {memory} and {tail}."


def statistical_summary(fv: FeatureVector) -> str:
    f = fv.as_dict()
    return (
        f"mean (mu) {fmt(f['mean'])}; standard deviation (sigma) {fmt(f['std'])}; "
        f"trend slope {fmt(f['slope'])} per step; lag-1 correlation {fmt(f['acf_lag1'])}; "
        f"min {fmt(f['min'])}; max {fmt(f['max'])}"
    )


# -- forecast prompt ------------------------------------------------------


@dataclass(frozen=True)
class RetrievedText:
    """A retrieved memory item as it should appear in a prompt."""

    entry_id: int
    similarity: float
    text: str


def _role_block(instance) -> str:
    ctx = instance.static_context
    target = ctx.get("target_description") or ctx.get("target") or "the target variable"
    lines = [
        "You are an expert time series forecaster.",
        (
            f"The task is to predict {target} (y_{{t+1:t+{instance.H}}}) given a {instance.L}-step "
            f"history (H) and {instance.H}-step known future covariates (F)."
        ),
    ]
    extra = {k: v for k, v in sorted(ctx.items()) if k not in ("target", "target_description")}
    if extra:
        lines.append("Static context: " + "; ".join(f"{k}: {v}" for k, v in extra.items()))
    return "\n".join(lines)


def _memory_block(patterns, pos_wisdom, neg_wisdom, laws) -> str:
    if not patterns and not pos_wisdom and not neg_wisdom and not laws:
        return "In-Context Memory: no retrieved experience is available for this instance; rely on the input context alone."
    lines = ["In-Context Memory (retrieved experience):"]
    if patterns:
        lines.append("Historical patterns (future behaviour that followed similar past windows):")
        for i, p in enumerate(patterns, 1):
            lines.append(f"Case {i} (similarity {fmt(p.similarity)}): {p.text}")
    if pos_wisdom or neg_wisdom:
        lines.append("Reasoning wisdom (distilled lessons; repeat the good, avoid the bad):")
        n = 0
        for label, items in (("Good", pos_wisdom), ("Bad", neg_wisdom)):
            for w in items:
                n += 1
                lines.append(f"Lesson {n} ({label}): {w.text}")
        if neg_wisdom:
            lines.append("Treat every preventative rule in the Bad lessons as binding.")
    if laws:
        lines.append("General laws (hard constraints every forecast must satisfy):")
        lines.extend(law.render() for law in laws)
    return "\n".join(lines)


def _context_block(instance, fv: FeatureVector) -> str:
    names = list(instance.covariate_names)
    ts = np.asarray(instance.timestamps)
    if ts.dtype.kind == "M":
        ts = ts.astype("datetime64[s]")
    ts = [str(t) for t in ts]
    header = ", ".join(["timestamp", "target", *names])
    hist = [header]
    for i in range(instance.L):
        row = [ts[i], fmt(instance.lookback[i]), *(fmt(v) for v in instance.dynamic_history[i])]
        hist.append(", ".join(row))
    if names:
        fut = [", ".join(["timestamp", *names])]
        for i in range(instance.H):
            fut.append(", ".join([ts[instance.L + i], *(fmt(v) for v in instance.dynamic_future[i])]))
        future_text = "\n".join(fut)
    else:
        future_text = "None (univariate series)."
    return "\n".join(
        [
            "Input Context:",
            "(1) Historical Data:",
            "\n".join(hist),
            "(2) Future Covariates:",
            future_text,
            "(3) Statistical Summary:",
            statistical_summary(fv),
            "(4) Visual Reasoning:",
            describe_shape(fv, instance.L),
        ]
    )


def _feedback_block(violations: Sequence[Violation], laws: Sequence[GeneralLaw], last_obs: float) -> str:
    lines = ["Feedback & Constraints: the previous attempt failed quality control:"]
    for v in violations:
        lines.append(f"- law {v.law_id} ({v.law_type}) at index {v.index}: {v.detail}")
    hard = f"You are now under Hard Constraints: the forecast must strictly maintain continuity with the last observed value (y_t={fmt(last_obs)})"
    ranges = [law for law in laws if law.law_type == "range"]
    for law in ranges:
        hard += f" and be strictly bounded within [{fmt_bound(law.params['lo'])}, {fmt_bound(law.params['hi'])}]"
    lines.append(hard + ".")
    lines.extend(law.render() for law in laws)
    return "\n".join(lines)


def build_forecast_prompt(
    instance,
    retrieved_patterns: Sequence[RetrievedText],
    retrieved_pos_wisdom: Sequence[RetrievedText],
    retrieved_neg_wisdom: Sequence[RetrievedText],
    laws: Sequence[GeneralLaw],
    features: FeatureVector,
    violations: Sequence[Violation] | None = None,
) -> PromptBundle:
    H = instance.H
    feedback = _feedback_block(violations, laws, instance.last_observation) if violations else None
    instruction = (
        "Instruction: synthesize the retrieved lessons and visual insights; prioritize autoregressive "
        "patterns over covariate signals if the regime is stable. Reason step by step, then generate "
        f"the final vector Y in R^{H} in the strict format <answer>v1, v2, ..., v{H}</answer> with "
        f"exactly {H} comma-separated numbers."
    )
    return PromptBundle(
        task="forecast",
        role_block=_role_block(instance),
        memory_block=_memory_block(retrieved_patterns, retrieved_pos_wisdom, retrieved_neg_wisdom, laws),
        context_block=_context_block(instance, features),
        feedback_block=feedback,
        instruction=instruction,
        answer_contract=H,
        tag=instance.id,
    )


# -- accumulation prompts -------------------------------------------------

_ANALYST = "You are an expert time series analyst who writes precise, compact summaries."


def build_summary_prompt(target_window, tag: str = "") -> PromptBundle:
    y = np.asarray(target_window, dtype=float)
    return PromptBundle(
        task="summary",
        role_block=_ANALYST,
        context_block=f"Future window ({y.size} steps): {fmt_vector(y)}",
        instruction=(
            "Summarize this window in a few sentences of natural language. Cover (1) the trend "
            "evolution, (2) the volatility, and (3) the peak values with their magnitude and position."
        ),
        tag=tag,
    )


def build_wisdom_prompt(trajectory_group, polarity: str, error_tau: float, tag: str = "") -> PromptBundle:
    if polarity not in ("pos", "neg"):
        raise ValueError(f"polarity must be 'pos' or 'neg', got {polarity!r}")
    verdict = (
        f"successful (MAE below {fmt(error_tau)})"
        if polarity == "pos"
        else f"failed (MAE at or above {fmt(error_tau)})"
    )
    lines = [f"The following {len(trajectory_group)} forecasting trajectories were {verdict}."]
    for i, rec in enumerate(trajectory_group, 1):
        lines.append(f"Case {i} [instance {rec.instance_id}, MAE {fmt(rec.error)}]:")
        lines.append(rec.rationale_text.strip())
        lines.append(f"Prediction: {fmt_vector(rec.prediction)}")
    if polarity == "pos":
        ask = (
            "Distill the reusable reasoning wisdom shared by these successful cases: which signals "
            "they relied on and why that worked. Write one compact lesson."
        )
    else:
        ask = (
            "Distill the failure wisdom from these cases: name the failure mode in brackets, explain "
            "what went wrong, and finish with 'Preventative Rule:' followed by one actionable rule."
        )
    return PromptBundle(
        task="wisdom",
        role_block=_ANALYST,
        context_block="\n".join(lines),
        instruction=ask,
        tag=tag or polarity,
    )


LAW_SCHEMA_HELP = (
    '{"type": "non_negativity"}\n'
    '{"type": "range", "lo": <number>, "hi": <number>}\n'
    '{"type": "max_step", "limit": <positive number>, "reference": "vs_last_observation" | "vs_previous_prediction"}'
)


def build_law_prompt(textualized_samples: Sequence[str], tag: str = "") -> PromptBundle:
    body = "\n".join(f"Sample {i}: {s}" for i, s in enumerate(textualized_samples, 1))
    return PromptBundle(
        task="law",
        role_block=_ANALYST,
        context_block=f"Feature descriptions of {len(textualized_samples)} representative training samples:\n{body}",
        instruction=(
            "Induce the general laws (physical or statistical commonsense) that every future value "
            "of this series should obey. Output each law as one JSON object per line inside "
            "<laws>...</laws>, using only these forms:\n" + LAW_SCHEMA_HELP
        ),
        tag=tag,
    )


def build_fusion_prompt(text_a: str, text_b: str) -> PromptBundle:
    return PromptBundle(
        task="fusion",
        role_block=_ANALYST,
        context_block=f"Lesson A:\n{text_a}\n\nLesson B:\n{text_b}",
        instruction=(
            "These two lessons overlap. Fuse them into a single lesson that keeps every distinct "
            "insight and drops repetition. Reply with the fused lesson only."
        ),
    )
