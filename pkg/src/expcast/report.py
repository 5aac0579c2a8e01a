"""Run reports: per-instance JSON lines between a config header and an aggregate footer."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import mae, mse
from .errors import ValidationError

REPORT_SCHEMA = "expcast-report/1"


@dataclass
class RunReport:
    config: dict[str, Any] = field(default_factory=dict)
    records: list[dict[str, Any]] = field(default_factory=list)
    excluded: list[dict[str, Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def aggregate(self) -> dict[str, Any]:
        scored = [r for r in self.records if r.get("truth") is not None]
        out: dict[str, Any] = {
            "instances": len(self.records),
            "scored": len(scored),
            "excluded": len(self.excluded),
            "total_bumps": sum(len(r.get("confidence_bumped_ids", [])) for r in self.records),
            "retries": sum(r.get("retries_used", 0) for r in self.records),
            "fallbacks": sum(1 for r in self.records if r.get("fallback")),
            "law_failures": sum(1 for r in self.records if not r.get("laws_satisfied", True)),
            "mse": None,
            "mae": None,
            "ma_mse": None,
            "ma_mae": None,
        }
        if scored:
            out["mse"] = float(np.mean([mse(r["prediction"], r["truth"]) for r in scored]))
            out["mae"] = float(np.mean([mae(r["prediction"], r["truth"]) for r in scored]))
            with_ma = [r for r in scored if r.get("ma_prediction") is not None]
            if with_ma:
                out["ma_mse"] = float(np.mean([mse(r["ma_prediction"], r["truth"]) for r in with_ma]))
                out["ma_mae"] = float(np.mean([mae(r["ma_prediction"], r["truth"]) for r in with_ma]))
        return out

    def lines(self) -> list[str]:
        head = {"record": "header", "schema_version": REPORT_SCHEMA, "config": self.config, "notes": self.notes}
        out = [json.dumps(head, sort_keys=True)]
        out += [json.dumps({"record": "instance", **r}, sort_keys=True) for r in self.records]
        out += [json.dumps({"record": "excluded", **r}, sort_keys=True) for r in self.excluded]
        out.append(json.dumps({"record": "footer", **self.aggregate()}, sort_keys=True))
        return out

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunReport":
        report = cls()
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {lineno}: malformed report record ({exc.msg})") from None
            kind = rec.pop("record", None)
            if kind == "header":
                if rec.get("schema_version") != REPORT_SCHEMA:
                    raise ValidationError(f"{path}: not a run report")
                report.config = rec.get("config", {})
                report.notes = rec.get("notes", [])
            elif kind == "instance":
                report.records.append(rec)
            elif kind == "excluded":
                report.excluded.append(rec)
            elif kind != "footer":
                raise ValidationError(f"{path}: line {lineno}: unknown record type {kind!r}")
        return report


def metrics_table(rows: list[dict[str, Any]], columns: list[str], fmt: str = "csv") -> str:
    """Render rows as CSV or a pipe-delimited markdown table."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([cell(r.get(c)) for c in columns])
        return buf.getvalue()
    out = ["| " + " | ".join(columns) + " |", "|" + "|".join("---" for _ in columns) + "|"]
    for r in rows:
        out.append("| " + " | ".join(cell(r.get(c)) for c in columns) + " |")
    return "\n".join(out) + "\n"
