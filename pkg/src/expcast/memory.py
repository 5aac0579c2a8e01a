"""Hierarchical experience memory: patterns, wisdom, and general laws.

Entries carry a mutable ``confidence`` counter. Once the store is switched to
the test phase, only confidences may change; any content insertion raises
:class:`~expcast.errors.SeparationError`.

The on-disk format is line-delimited JSON: one header record followed by one
record per entry or law, ordered by id.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import as_vector
from .errors import MemoryFileError, SeparationError, ValidationError
from .laws import GeneralLaw
from .similarity import (
    SCHEMA_VERSION,
    FeatureVector,
    SimilarityConfig,
    composite_from_parts,
    extract_features,
)

logger = logging.getLogger(__name__)

FILE_SCHEMA = "expcast-memory/1"
ENTRY_KINDS = ("pattern", "wisdom_pos", "wisdom_neg")
REPLACE_ABOVE = 0.95
MERGE_ABOVE = 0.8


@dataclass
class MemoryEntry:
    id: int
    kind: str
    anchor_series: tuple[float, ...]
    summary_text: str
    features: FeatureVector | None
    confidence: int = 0
    created_phase: str = "train"
    provenance: tuple[str, ...] = ()

    def record(self) -> dict:
        return {
            "record": "entry",
            "id": self.id,
            "kind": self.kind,
            "anchor_series": list(self.anchor_series),
            "summary_text": self.summary_text,
            "features": None if self.features is None else list(self.features.values),
            "confidence": self.confidence,
            "created_phase": self.created_phase,
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class RetrievalResult:
    entry_id: int
    similarity: float
    adjusted_score: float
    rank: int


@dataclass(frozen=True)
class WisdomOutcome:
    action: str  # "replaced" | "merged" | "inserted"
    entry_id: int
    s_star: float | None


def filter_tier(s_star: float | None) -> str:
    """Map the best-match similarity onto replace / merge / insert."""
    if s_star is None or s_star <= MERGE_ABOVE:
        return "inserted"
    if s_star <= REPLACE_ABOVE:
        return "merged"
    return "replaced"


class MemoryStore:
    def __init__(self, similarity: SimilarityConfig | None = None, p: int = 3):
        self.similarity = similarity or SimilarityConfig()
        self.p = p
        self.phase = "train"
        self._entries: dict[int, MemoryEntry] = {}
        self._laws: dict[int, GeneralLaw] = {}
        self._next_id = 0
        self._lock = threading.Lock()

    # -- inspection -------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.records() == other.records()

    def entries(self, kind: str | None = None) -> list[MemoryEntry]:
        return [e for e in self._entries.values() if kind is None or e.kind == kind]

    def get(self, entry_id: int) -> MemoryEntry:
        try:
            return self._entries[entry_id]
        except KeyError:
            raise KeyError(f"unknown memory entry id {entry_id}") from None

    @property
    def laws(self) -> list[GeneralLaw]:
        return list(self._laws.values())

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in ENTRY_KINDS}
        for e in self._entries.values():
            out[e.kind] += 1
        out["law"] = len(self._laws)
        return out

    def confidences(self) -> dict[int, int]:
        return {i: e.confidence for i, e in self._entries.items()}

    def content_digest(self) -> str:
        """Hash of everything except confidence values."""
        h = hashlib.sha256()
        for rec in self.records():
            rec = dict(rec)
            rec.pop("confidence", None)
            if rec["record"] == "header":
                rec.pop("phase", None)
            h.update(json.dumps(rec, sort_keys=True).encode())
        return h.hexdigest()

    # -- writes -----------------------------------------------------------

    def freeze(self) -> None:
        """Enter the test phase: content becomes read-only."""
        self.phase = "test"

    def _check_train(self) -> None:
        if self.phase != "train":
            raise SeparationError("train/test separation: memory content cannot change during the test phase")

    def _new_entry(self, kind, anchor, text, provenance) -> MemoryEntry:
        x = as_vector(anchor, "anchor_series")
        if not text or not text.strip():
            raise ValidationError("summary_text is empty")
        entry = MemoryEntry(
            id=self._next_id,
            kind=kind,
            anchor_series=tuple(float(v) for v in x),
            summary_text=text,
            features=extract_features(x, self.p),
            provenance=tuple(provenance),
        )
        return entry

    def _commit(self, entry: MemoryEntry) -> int:
        self._entries[entry.id] = entry
        self._next_id += 1
        return entry.id

    def insert_pattern(self, anchor_series, summary_text: str, provenance: Iterable[str] = ()) -> int:
        with self._lock:
            self._check_train()
            return self._commit(self._new_entry("pattern", anchor_series, summary_text, provenance))

    def best_match(self, anchor_series, kind: str) -> tuple[int | None, float | None]:
        x = as_vector(anchor_series, "anchor_series")
        fx = extract_features(x, self.p)
        best_id, best = None, None
        for e in self.entries(kind):
            s = composite_from_parts(x, fx, np.asarray(e.anchor_series), e.features, self.similarity)
            if best is None or s > best:
                best_id, best = e.id, s
        return best_id, best

    def insert_wisdom_filtered(
        self,
        kind: str,
        anchor_series,
        text: str,
        fuse: Callable[[str, str], str] | None,
        provenance: Iterable[str] = (),
        similarity: Callable[[MemoryEntry], float] | None = None,
    ) -> WisdomOutcome:
        """Insert a distilled wisdom through the replace / merge / preserve filter.

        ``similarity`` overrides the composite score against each same-kind
        entry; it exists so tier boundaries can be exercised exactly.
        """
        if kind not in ("wisdom_pos", "wisdom_neg"):
            raise ValidationError(f"not a wisdom kind: {kind!r}")
        with self._lock:
            self._check_train()
            if similarity is None:
                match_id, s_star = self.best_match(anchor_series, kind)
            else:
                match_id, s_star = None, None
                for e in self.entries(kind):
                    s = similarity(e)
                    if s_star is None or s > s_star:
                        match_id, s_star = e.id, s
            tier = filter_tier(s_star)
            candidate = self._new_entry(kind, anchor_series, text, provenance)
            if tier == "replaced":
                old = self._entries[match_id]
                self._entries[match_id] = MemoryEntry(
                    id=old.id,
                    kind=kind,
                    anchor_series=candidate.anchor_series,
                    summary_text=candidate.summary_text,
                    features=candidate.features,
                    confidence=0,
                    provenance=candidate.provenance,
                )
                return WisdomOutcome("replaced", match_id, s_star)
            if tier == "merged":
                old = self._entries[match_id]
                try:
                    fused = fuse(old.summary_text, text) if fuse is not None else None
                    if not fused or not fused.strip():
                        raise ValueError("fusion returned empty text")
                except Exception as exc:
                    logger.warning("wisdom fusion failed (%s); preserving candidate as new entry", exc)
                else:
                    old.summary_text = fused.strip()
                    old.provenance = old.provenance + candidate.provenance
                    return WisdomOutcome("merged", match_id, s_star)
            return WisdomOutcome("inserted", self._commit(candidate), s_star)

    def add_law(self, law: GeneralLaw) -> int:
        """Store a law, assigning it the next id."""
        with self._lock:
            self._check_train()
            law.id = self._next_id
            self._next_id += 1
            self._laws[law.id] = law
            return law.id

    def bump_confidence(self, ids: Sequence[int]) -> dict[int, int]:
        with self._lock:
            for i in ids:
                if i not in self._entries:
                    raise KeyError(f"unknown memory entry id {i}")
            for i in ids:
                self._entries[i].confidence += 1
            return {i: self._entries[i].confidence for i in ids}

    # -- retrieval --------------------------------------------------------

    def retrieve(
        self,
        query,
        kind: str,
        k: int = 3,
        beta: float = 0.1,
        cfg: SimilarityConfig | None = None,
        exclude: Iterable[int] = (),
    ) -> list[RetrievalResult]:
        if k < 1:
            raise ValidationError("k must be >= 1")
        cfg = cfg or self.similarity
        x = as_vector(query, "query")
        fx = extract_features(x, self.p)
        skip = set(exclude)
        scored = []
        for e in self.entries(kind):
            if e.id in skip:
                continue
            s = composite_from_parts(x, fx, np.asarray(e.anchor_series), e.features, cfg)
            adj = s + beta * math.log1p(e.confidence) if e.confidence > 0 else s
            scored.append((adj, s, e.id))
        scored.sort(key=lambda t: (-t[0], t[2]))
        return [RetrievalResult(i, s, adj, rank) for rank, (adj, s, i) in enumerate(scored[:k])]

    # -- persistence ------------------------------------------------------

    def header(self) -> dict:
        return {
            "record": "header",
            "schema_version": FILE_SCHEMA,
            "feature_schema": SCHEMA_VERSION,
            "p": self.p,
            "alpha": self.similarity.alpha,
            "dtw_tau": self.similarity.dtw_tau,
            "cosine_clamp": self.similarity.cosine_clamp,
            "next_id": self._next_id,
            "phase": self.phase,
        }

    def records(self) -> list[dict]:
        items: list[dict] = [e.record() for e in self._entries.values()]
        for law in self._laws.values():
            items.append(
                {
                    "record": "law",
                    "id": law.id,
                    "law_type": law.law_type,
                    "params": law.params,
                    "description_text": law.description_text,
                }
            )
        items.sort(key=lambda r: r["id"])
        return [self.header()] + items

    def persist(self, path) -> None:
        lines = [json.dumps(r, sort_keys=True) for r in self.records()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MemoryStore":
        text = Path(path).read_text(encoding="utf-8")
        store = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MemoryFileError(f"malformed record ({exc.msg})", lineno) from None
            try:
                if lineno == 1:
                    if rec.get("record") != "header" or rec.get("schema_version") != FILE_SCHEMA:
                        raise MemoryFileError("first line must be a memory header", lineno)
                    store = cls(
                        SimilarityConfig(rec["alpha"], rec["dtw_tau"], rec["cosine_clamp"]), p=rec["p"]
                    )
                    store._next_id = rec["next_id"]
                    store.phase = rec["phase"]
                elif rec["record"] == "entry":
                    feats = rec["features"]
                    entry = MemoryEntry(
                        id=rec["id"],
                        kind=rec["kind"],
                        anchor_series=tuple(float(v) for v in rec["anchor_series"]),
                        summary_text=rec["summary_text"],
                        features=None if feats is None else FeatureVector(tuple(feats), p=store.p),
                        confidence=int(rec["confidence"]),
                        created_phase=rec["created_phase"],
                        provenance=tuple(rec["provenance"]),
                    )
                    if entry.kind not in ENTRY_KINDS:
                        raise MemoryFileError(f"unknown entry kind {entry.kind!r}", lineno)
                    store._entries[entry.id] = entry
                elif rec["record"] == "law":
                    law = GeneralLaw(rec["id"], rec["law_type"], dict(rec["params"]), rec["description_text"])
                    store._laws[law.id] = law
                else:
                    raise MemoryFileError(f"unknown record type {rec['record']!r}", lineno)
            except MemoryFileError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise MemoryFileError(f"invalid record ({exc})", lineno) from None
        if store is None:
            raise MemoryFileError("empty memory file", 1)
        return store
