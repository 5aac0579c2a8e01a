"""Scripted responders for the mock backend.

The ``analog`` responder imitates a model that leans entirely on retrieved
memory: when the prompt carries a historical pattern whose summary includes a
``Continuation:`` vector, it forecasts that vector; otherwise it extrapolates
the last observation along the stated trend slope. It reads only the prompt
text, the same information a real model would see.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .backends import MockBackend
from .prompts import PromptBundle, fmt, fmt_vector, render_answer

_NUM = r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"


def _floats(text: str) -> list[float]:
    return [float(t) for t in re.findall(_NUM, text)]


def _summary_reply(bundle: PromptBundle) -> str:
    y = np.asarray(_floats(bundle.context_block.split(":", 1)[1]))
    d = y[-1] - y[0]
    trend = "rising" if d > 0.5 * y.std() else "falling" if d < -0.5 * y.std() else "broadly flat"
    return (
        f"Trend: {trend}, moving from {fmt(y[0])} to {fmt(y[-1])}. "
        f"Volatility: standard deviation {fmt(y.std())}. "
        f"Peak: maximum {fmt(y.max())} at step {int(y.argmax())}, minimum {fmt(y.min())} at step {int(y.argmin())}. "
        f"Continuation: {fmt_vector(y)}"
    )


def _wisdom_reply(bundle: PromptBundle) -> str:
    n = len(re.findall(r"^Case \d+ ", bundle.context_block, re.M))
    if "were successful" in bundle.context_block:
        return (
            f"[Analog-Reuse] Across {n} successful cases, reusing the continuation of the most similar "
            "historical pattern kept the error low. Follow the top retrieved continuation when its similarity is high."
        )
    return (
        f"[Pattern-Neglect] Across {n} failed cases, the forecast ignored the retrieved continuation and "
        "extrapolated a generic drift. Preventative Rule: never replace a high-similarity historical "
        "continuation with naive extrapolation."
    )


def _law_reply(bundle: PromptBundle) -> str:
    mins = [float(m) for m in re.findall(rf"minimum ({_NUM})", bundle.context_block)]
    maxs = [float(m) for m in re.findall(rf"maximum ({_NUM})", bundle.context_block)]
    if not mins or not maxs:
        return "No reliable law can be induced from these samples."
    lo, hi = min(mins), max(maxs)
    margin = 0.1 * (hi - lo)
    lines = [json.dumps({"type": "range", "lo": round(lo - margin, 4), "hi": round(hi + margin, 4)})]
    if lo >= 0:
        lines.insert(0, json.dumps({"type": "non_negativity"}))
    return "Induced laws:\n<laws>\n" + "\n".join(lines) + "\n</laws>"


def _fusion_reply(bundle: PromptBundle) -> str:
    a, b = bundle.context_block.split("\n\nLesson B:\n")
    a = a.replace("Lesson A:\n", "", 1).strip()
    b = b.strip()
    return a if a == b else f"{a} Additionally: {b}"


def _forecast_reply(bundle: PromptBundle, rng: np.random.Generator, noise: float) -> str:
    H = bundle.answer_contract
    m = re.search(r"^Case 1 \(similarity [^)]*\):.*?Continuation: ([^\n]*)", bundle.memory_block, re.M)
    if m and len(_floats(m.group(1))) >= H:
        pred = np.asarray(_floats(m.group(1))[:H])
        why = "Reusing the continuation of the most similar historical pattern (case 1), as the success lesson advises."
    else:
        hist = bundle.context_block.split("(2) Future Covariates:")[0].strip().splitlines()
        last = float(hist[-1].split(", ")[1])
        slope_m = re.search(rf"trend slope ({_NUM})", bundle.context_block)
        slope = float(slope_m.group(1)) if slope_m else 0.0
        pred = last + slope * np.arange(1, H + 1)
        why = "No usable memory; extrapolating the last observation along the fitted trend slope as a generic drift."
    if noise > 0:
        pred = pred + rng.normal(0.0, noise, size=H)
    bounds = re.search(rf"strictly bounded within \[({_NUM}), ({_NUM})\]", bundle.feedback_block or "")
    if bounds:
        pred = np.clip(pred, float(bounds.group(1)), float(bounds.group(2)))
        why += " Clipped into the hard range constraint from the feedback."
    return f"Reasoning: {why}\n{render_answer(pred)}"


def analog_responder(noise: float = 0.0):
    def respond(bundle: PromptBundle, rng: np.random.Generator, sample_index: int, repeat: int) -> str:
        if bundle.task == "summary":
            return _summary_reply(bundle)
        if bundle.task == "wisdom":
            return _wisdom_reply(bundle)
        if bundle.task == "law":
            return _law_reply(bundle)
        if bundle.task == "fusion":
            return _fusion_reply(bundle)
        return _forecast_reply(bundle, rng, noise)

    return respond


RESPONDERS = {"analog": analog_responder}


def mock_from_script(script: dict, seed: int = 0) -> MockBackend:
    """Build a mock backend from a decoded script document.

    ``{"replies": [...]}`` gives a fixed reply queue;
    ``{"responder": "analog", "options": {...}}`` a named responder.
    """
    if "replies" in script:
        replies = script["replies"]
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ConfigurationError("mock script 'replies' must be a list of strings")
        return MockBackend(replies=replies, seed=seed)
    name = script.get("responder")
    if name not in RESPONDERS:
        raise ConfigurationError(f"unknown mock responder {name!r}; known: {sorted(RESPONDERS)}")
    return MockBackend(responder=RESPONDERS[name](**script.get("options", {})), seed=seed)


def load_mock_script(path, seed: int = 0) -> MockBackend:
    try:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"mock script not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"mock script {path} is not valid JSON: {exc}") from None
    return mock_from_script(script, seed)
