"""Machine-checkable forecast constraints and their compiler."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import LawCompileError

LAW_TYPES = ("non_negativity", "range", "max_step")
STEP_REFERENCES = ("vs_last_observation", "vs_previous_prediction")


def fmt_bound(v: float) -> str:
    """Bound formatting: 4 decimals, trailing zeros trimmed down to 2."""
    text = f"{v:.4f}"
    while text.endswith("0") and len(text.split(".")[1]) > 2:
        text = text[:-1]
    return text


@dataclass(frozen=True)
class Violation:
    law_id: int
    law_type: str
    index: int
    value: float
    bound: str
    detail: str


@dataclass
class GeneralLaw:
    id: int
    law_type: str
    params: dict[str, Any] = field(default_factory=dict)
    description_text: str = ""

    def __post_init__(self):
        if self.law_type not in LAW_TYPES:
            raise LawCompileError(f"unknown law type {self.law_type!r}")
        if self.law_type == "range" and not self.params["lo"] <= self.params["hi"]:
            raise LawCompileError(f"range law needs lo <= hi, got [{self.params['lo']}, {self.params['hi']}]")
        if self.law_type == "max_step":
            if not self.params["limit"] > 0:
                raise LawCompileError(f"max_step limit must be positive, got {self.params['limit']}")
            if self.params["reference"] not in STEP_REFERENCES:
                raise LawCompileError(f"unknown max_step reference {self.params['reference']!r}")

    def render(self) -> str:
        """Hard-constraint sentence used in prompts."""
        if self.law_type == "non_negativity":
            return f"[law {self.id}] every forecast value must be >= 0"
        if self.law_type == "range":
            return (
                f"[law {self.id}] every forecast value must be strictly bounded within "
                f"[{fmt_bound(self.params['lo'])}, {fmt_bound(self.params['hi'])}]"
            )
        if self.params["reference"] == "vs_last_observation":
            return (
                f"[law {self.id}] the first forecast value may differ from the last observation "
                f"by at most {fmt_bound(self.params['limit'])}"
            )
        return (
            f"[law {self.id}] consecutive values (starting from the last observation) may differ "
            f"by at most {fmt_bound(self.params['limit'])}"
        )

    def check(self, prediction: np.ndarray, last_observation: float) -> list[Violation]:
        out = []
        if self.law_type == "non_negativity":
            for i, v in enumerate(prediction):
                if v < 0:
                    out.append(Violation(self.id, self.law_type, i, float(v), "0", f"value {v:.4f} < 0"))
        elif self.law_type == "range":
            lo, hi = self.params["lo"], self.params["hi"]
            bound = f"[{fmt_bound(lo)}, {fmt_bound(hi)}]"
            for i, v in enumerate(prediction):
                if v < lo or v > hi:
                    out.append(Violation(self.id, self.law_type, i, float(v), bound, f"value {v:.4f} outside {bound}"))
        else:
            limit = self.params["limit"]
            prev = np.concatenate([[last_observation], prediction[:-1]])
            stop = 1 if self.params["reference"] == "vs_last_observation" else len(prediction)
            for i in range(stop):
                jump = abs(float(prediction[i]) - float(prev[i]))
                if jump > limit:
                    out.append(
                        Violation(
                            self.id, self.law_type, i, float(prediction[i]), fmt_bound(limit),
                            f"boundary jump too large (|{prediction[i]:.2f} - {prev[i]:.2f}| = {jump:.2f} > {fmt_bound(limit)})",
                        )
                    )
        return out

    def to_record(self) -> dict:
        return {"type": self.law_type, **self.params}


def _real(record: Mapping, key: str) -> float:
    try:
        value = float(record[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise LawCompileError(f"law record missing numeric field {key!r}") from exc
    if not math.isfinite(value):
        raise LawCompileError(f"law field {key!r} is not finite")
    return value


def compile_law(record: Mapping[str, Any], law_id: int = 0, description: str = "") -> GeneralLaw:
    """Turn a structured law record (``{"type": ..., ...}``) into a GeneralLaw."""
    if not isinstance(record, Mapping):
        raise LawCompileError(f"law record must be a mapping, got {type(record).__name__}")
    law_type = str(record.get("type", "")).strip().lower().replace("-", "_")
    if law_type == "non_negativity":
        params: dict[str, Any] = {}
    elif law_type == "range":
        params = {"lo": _real(record, "lo"), "hi": _real(record, "hi")}
    elif law_type == "max_step":
        params = {
            "limit": _real(record, "limit"),
            "reference": str(record.get("reference", "vs_last_observation")),
        }
    else:
        raise LawCompileError(f"unknown law type {record.get('type')!r}")
    return GeneralLaw(law_id, law_type, params, description)


def check_laws(prediction, last_observation: float, laws: Sequence[GeneralLaw]) -> list[Violation]:
    """All violations of all laws; empty iff the prediction is compliant."""
    pred = np.asarray(prediction, dtype=float)
    out: list[Violation] = []
    for law in laws:
        out.extend(law.check(pred, float(last_observation)))
    return out
