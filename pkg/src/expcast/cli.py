"""Command-line entry point: ingest, accumulate, forecast, evaluate, ablate.

Exit codes: 0 success, 1 validation/configuration error, 2 transport error,
3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .accumulation import accumulate
from .config import RunConfig, dataset_from_preset, default_config, load_config, resolved
from .data import ingest, load_csv_dataset, synthetic_regimes
from .errors import ConfigurationError, TransportError, ValidationError
from .gateway import Gateway, HttpBackend, load_mock_script
from .inference import run_test_stream
from .memory import MemoryStore
from .report import RunReport, metrics_table

logger = logging.getLogger("expcast")

ABLATIONS = {
    "no-pattern": {"use_pattern": False},
    "no-wisdom": {"use_wisdom": False},
    "no-law": {"use_law": False},
    "no-adapt": {"use_adapt": False},
    "no-all": {"use_pattern": False, "use_wisdom": False, "use_law": False, "use_adapt": False},
}


# -- wiring ---------------------------------------------------------------


def make_gateway(cfg: RunConfig) -> Gateway:
    b = cfg.backend
    if b.kind == "mock":
        backend = load_mock_script(b.mock_script, seed=cfg.seed)
    else:
        backend = HttpBackend(
            b.base_url, b.api_key_env, max_attempts=b.max_attempts, backoff=b.backoff, audit_path=b.audit_path
        )
    params = replace(cfg.sampling, seed=cfg.seed if b.kind == "mock" else cfg.sampling.seed)
    return Gateway(backend, params, b.reasoning_model, b.summary_model)


def _load_memory(cfg: RunConfig) -> MemoryStore:
    path = Path(cfg.memory_path)
    if not path.exists():
        raise ConfigurationError(f"memory file {path} not found; run `expcast accumulate` first")
    memory = MemoryStore.load(path)
    memory.similarity = replace(memory.similarity, alpha=cfg.similarity.alpha)
    return memory


def cmd_accumulate(cfg: RunConfig) -> dict:
    cfg.validate()
    splits = load_csv_dataset(cfg.dataset)
    train = splits["train"]
    if not train:
        raise ValidationError("training split produced no windows")
    memory = MemoryStore(cfg.similarity)
    manifest = accumulate(train, memory, make_gateway(cfg), replace(cfg.accumulation, seed=cfg.seed), cfg.inference)
    test_start = cfg.dataset.split.bounds()["test"][0]
    manifest.update(
        {
            "config": resolved(cfg),
            "test_start_offset": test_start,
            "train_test_separated": manifest["max_source_offset"] < test_start,
            "memory_digest": memory.content_digest(),
        }
    )
    memory.persist(cfg.memory_path)
    Path(cfg.manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _forecast(cfg: RunConfig, split: str = "test") -> RunReport:
    cfg.validate()
    memory = _load_memory(cfg)
    instances = load_csv_dataset(cfg.dataset)[split]
    stamp = {**resolved(cfg), "split": split, "memory_digest": memory.content_digest()}
    # where the report lands is not a run parameter; keep reports location-independent
    stamp.pop("report_path")
    report = run_test_stream(instances, memory, make_gateway(cfg), cfg.inference, stamp, workers=cfg.workers)
    report.notes.append(f"target channel: {cfg.dataset.target_column}")
    return report


def cmd_forecast(cfg: RunConfig) -> RunReport:
    report = _forecast(cfg)
    report.write(cfg.report_path)
    if not report.records and report.excluded and all(e.get("error_type") == "TransportError" for e in report.excluded):
        raise TransportError(f"all {len(report.excluded)} instances failed at the transport layer; see {cfg.report_path}")
    return report


def cmd_evaluate(report_path, fmt: str = "csv") -> str:
    report = RunReport.read(report_path)
    agg = report.aggregate()
    row = {"report": str(report_path), **agg}
    return metrics_table([row], ["report", "instances", "excluded", "mse", "mae", "ma_mse", "ma_mae", "total_bumps"], fmt)


def cmd_ablate(cfg: RunConfig, variants: list[str] | None = None, fmt: str = "csv") -> tuple[list[dict], str]:
    variants = variants or list(ABLATIONS)
    rows = []
    stem = Path(cfg.report_path)
    for name in variants:
        run_cfg = replace(cfg, inference=replace(cfg.inference, **ABLATIONS[name]))
        report = _forecast(run_cfg)
        report.write(stem.with_name(f"{stem.stem}.{name}{stem.suffix or '.jsonl'}"))
        agg = report.aggregate()
        rows.append({"variant": name, "mse": agg["mse"], "mae": agg["mae"], "instances": agg["instances"], "excluded": agg["excluded"]})
    table = metrics_table(rows, ["variant", "mse", "mae", "instances", "excluded"], fmt)
    return rows, table


# -- argument parsing -----------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--dataset", help="dataset preset name (e.g. NP, ETTh1, synthetic)")
    p.add_argument("--data", help="path to the canonical CSV")
    p.add_argument("--backend", choices=["http", "mock"])
    p.add_argument("--mock-script", help="JSON script for the mock backend")
    p.add_argument("--base-url", help="chat-completions base URL for the http backend")
    p.add_argument("--api-key-env", help="environment variable holding the API credential")
    p.add_argument("--seed", type=int)
    p.add_argument("--memory", help="memory file path")
    p.add_argument("--report", help="run report path")
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--aggregate", choices=["select", "mean"])
    p.add_argument("--concurrency", type=int, help="parallel trajectory samples per instance")
    p.add_argument("--workers", type=int, help="parallel instances (only when adaptation is off)")
    for flag in ("pattern", "wisdom", "law", "adapt"):
        p.add_argument(f"--no-{flag}", action="store_true")


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.dataset:
        cfg = RunConfig(dataset=dataset_from_preset(args.dataset))
    else:
        cfg = default_config()
    if args.dataset and args.config and args.dataset != cfg.dataset.name:
        cfg = replace(cfg, dataset=replace(dataset_from_preset(args.dataset), path=cfg.dataset.path))
    if args.data:
        cfg = replace(cfg, dataset=replace(cfg.dataset, path=args.data))
    backend = {}
    for attr, key in (("backend", "kind"), ("mock_script", "mock_script"), ("base_url", "base_url"), ("api_key_env", "api_key_env")):
        if getattr(args, attr) is not None:
            backend[key] = getattr(args, attr)
    if backend:
        cfg = replace(cfg, backend=replace(cfg.backend, **backend))
    inf = {}
    for attr, key in (("k", "k"), ("m", "M"), ("max_retries", "max_retries"), ("aggregate", "aggregate"), ("concurrency", "concurrency")):
        if getattr(args, attr) is not None:
            inf[key] = getattr(args, attr)
    for flag in ("pattern", "wisdom", "law", "adapt"):
        if getattr(args, f"no_{flag}", False):
            inf[f"use_{flag}"] = False
    if inf:
        cfg = replace(cfg, inference=replace(cfg.inference, **inf))
    if args.alpha is not None:
        cfg = replace(cfg, similarity=replace(cfg.similarity, alpha=args.alpha))
    top = {}
    for attr, key in (("seed", "seed"), ("memory", "memory_path"), ("report", "report_path"), ("workers", "workers")):
        if getattr(args, attr) is not None:
            top[key] = getattr(args, attr)
    return replace(cfg, **top) if top else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expcast", description="Memory-driven LLM time series forecasting")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a public dataset layout into the canonical CSV")
    p.add_argument("--format", choices=["epf", "ett", "canonical"], default="canonical")
    p.add_argument("--input", help="source file")
    p.add_argument("--output", required=True)
    p.add_argument("--target")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
    p.add_argument("--rename", action="append", default=[], metavar="OLD=NEW")
    p.add_argument("--synthetic", action="store_true", help="write the synthetic two-regime benchmark instead")
    p.add_argument("--seed", type=int, default=0)

    for name, help_ in (
        ("accumulate", "build the experience memory from the training split"),
        ("forecast", "forecast the test split with the accumulated memory"),
    ):
        _common(sub.add_parser(name, help=help_))

    p = sub.add_parser("evaluate", help="print the MSE/MAE table of a run report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--output")

    p = sub.add_parser("ablate", help="run the ablation matrix and compare metrics")
    _common(p)
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--output", help="where to write the comparison table")
    return parser


def _run(args) -> int:
    if args.command == "ingest":
        if args.synthetic:
            synthetic_regimes(seed=args.seed).to_csv(args.output, index=False)
        else:
            if not args.input:
                raise ValidationError("ingest needs --input (or --synthetic)")
            covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
            rename = dict(r.split("=", 1) for r in args.rename)
            ingest(args.format, args.input, args.output, args.target, covs, rename)
        print(f"wrote {args.output}")
        return 0
    if args.command == "evaluate":
        table = cmd_evaluate(args.report, args.format)
        if args.output:
            Path(args.output).write_text(table, encoding="utf-8")
        print(table, end="")
        return 0

    cfg = resolve_config(args)
    if args.command == "accumulate":
        manifest = cmd_accumulate(cfg)
        print(f"wrote {cfg.memory_path} ({json.dumps(manifest['counts'], sort_keys=True)}) and {cfg.manifest_path}")
    elif args.command == "forecast":
        report = cmd_forecast(cfg)
        agg = report.aggregate()
        print(f"wrote {cfg.report_path}: {agg['instances']} instances, mse={agg['mse']}, mae={agg['mae']}")
    elif args.command == "ablate":
        variants = [n for n in ABLATIONS if n != "no-all" and getattr(args, n.replace("-", "_"))]
        # ablation flags select variants here; they must not also disable features globally
        cfg = replace(cfg, inference=replace(cfg.inference, use_pattern=True, use_wisdom=True, use_law=True, use_adapt=True))
        _, table = cmd_ablate(cfg, variants or None, args.format)
        if args.output:
            Path(args.output).write_text(table, encoding="utf-8")
        print(table, end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
