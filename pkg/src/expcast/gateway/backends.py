"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted mock."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx
import numpy as np

from ..errors import ConfigurationError, TransportError, ValidationError
from .prompts import PromptBundle

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.6
    top_p: float = 0.7
    max_tokens: int = 16384
    seed: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError("temperature must be non-negative")
        if not 0 < self.top_p <= 1:
            raise ValidationError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be positive")


@dataclass(frozen=True)
class LlmReply:
    rationale_text: str
    usage: dict[str, int] = field(default_factory=dict)
    model: str = ""


class Backend(Protocol):
    concurrent_safe: bool

    def complete(
        self, bundle: PromptBundle, params: SamplingParams, model: str, sample_index: int = 0
    ) -> LlmReply: ...


class HttpBackend:
    """POSTs to ``{base_url}/chat/completions`` with bounded exponential backoff."""

    concurrent_safe = True

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        max_attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 600.0,
        audit_path: str | Path | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self.audit_path = Path(audit_path) if audit_path else None
        self._client = client or httpx.Client(timeout=timeout)
        self._audit_lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _audit(self, record: dict) -> None:
        if self.audit_path is None:
            return
        with self._audit_lock, self.audit_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def complete(self, bundle, params, model, sample_index=0):
        payload: dict[str, Any] = {
            "model": model,
            "messages": bundle.messages(),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post(url, json=payload, headers=self._headers())
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                status = None
            else:
                status = resp.status_code
                if status == 200:
                    body = resp.json()
                    text = body["choices"][0]["message"]["content"] or ""
                    usage = {k: int(v) for k, v in (body.get("usage") or {}).items() if isinstance(v, int)}
                    self._audit(
                        {
                            "event": "completion",
                            "digest": bundle.digest(),
                            "sample_index": sample_index,
                            "attempt": attempt,
                            "model": model,
                            "status": status,
                            "usage": usage,
                            "headers": {"Authorization": "[REDACTED]"},
                        }
                    )
                    return LlmReply(text, usage, body.get("model", model))
                last_error = f"HTTP {status}"
                if status not in RETRYABLE_STATUS:
                    self._audit({"event": "error", "digest": bundle.digest(), "status": status, "attempt": attempt})
                    raise TransportError(f"chat completion failed: {last_error}")
            self._audit({"event": "retry", "digest": bundle.digest(), "status": status, "attempt": attempt})
            if attempt < self.max_attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("completion attempt %d failed (%s); retrying in %.2fs", attempt, last_error, delay)
                time.sleep(delay)
        raise TransportError(f"chat completion failed after {self.max_attempts} attempts: {last_error}")


Responder = Callable[[PromptBundle, np.random.Generator, int, int], str]


def _stream_seed(*parts) -> int:
    h = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


class MockBackend:
    """Deterministic stand-in for an LLM.

    Two modes:

    * ``replies``: a fixed queue consumed in call order. Running out raises
      ConfigurationError. Call order is only deterministic for sequential use,
      so this mode reports ``concurrent_safe = False``.
    * ``responder``: a function ``(bundle, rng, sample_index, repeat) -> text``.
      ``rng`` is seeded from (bundle digest, seed, sample_index, repeat), where
      ``repeat`` counts earlier calls with the same digest and sample index, so
      results do not depend on thread scheduling.
    """

    def __init__(self, replies: list[str] | None = None, responder: Responder | None = None, seed: int = 0):
        if (replies is None) == (responder is None):
            raise ConfigurationError("mock backend needs exactly one of replies or responder")
        self.replies = list(replies) if replies is not None else None
        self.responder = responder
        self.seed = seed
        self.concurrent_safe = responder is not None
        self.calls: list[tuple[str, str, int]] = []
        self._cursor = 0
        self._repeats: dict[tuple[str, int], int] = defaultdict(int)
        self._lock = threading.Lock()

    def complete(self, bundle, params, model, sample_index=0):
        digest = bundle.digest()
        seed = self.seed if params.seed is None else params.seed
        with self._lock:
            self.calls.append((bundle.task, bundle.tag, sample_index))
            if self.replies is not None:
                if self._cursor >= len(self.replies):
                    raise ConfigurationError(
                        f"mock script underrun: {len(self.replies)} replies scripted, call {self._cursor + 1} requested"
                    )
                text = self.replies[self._cursor]
                self._cursor += 1
                return LlmReply(text, model=model or "mock")
            key = (digest, sample_index)
            repeat = self._repeats[key]
            self._repeats[key] += 1
        rng = np.random.default_rng(_stream_seed(digest, seed, sample_index, repeat))
        return LlmReply(self.responder(bundle, rng, sample_index, repeat), model=model or "mock")

    def rounds(self, tag: str | None = None, task: str = "forecast") -> int:
        """Number of calls made for ``task`` (optionally restricted to one tag)."""
        return sum(1 for t, g, _ in self.calls if t == task and (tag is None or g == tag))


class Gateway:
    """Binds a backend to sampling parameters and model names."""

    def __init__(
        self,
        backend: Backend,
        params: SamplingParams | None = None,
        reasoning_model: str = "gpt-5",
        summary_model: str | None = None,
    ):
        self.backend = backend
        self.params = params or SamplingParams()
        self.reasoning_model = reasoning_model
        self.summary_model = summary_model or reasoning_model

    @property
    def concurrent_safe(self) -> bool:
        return bool(getattr(self.backend, "concurrent_safe", False))

    def complete(self, bundle: PromptBundle, sample_index: int = 0) -> LlmReply:
        model = self.reasoning_model if bundle.task == "forecast" else self.summary_model
        reply = self.backend.complete(bundle, self.params, model, sample_index)
        if not reply.rationale_text.strip():
            raise TransportError("backend returned an empty completion")
        return reply

    def describe(self) -> dict:
        return {
            "backend": type(self.backend).__name__,
            "sampling": asdict(self.params),
            "reasoning_model": self.reasoning_model,
            "summary_model": self.summary_model,
        }
