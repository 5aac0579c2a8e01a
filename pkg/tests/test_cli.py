import json
from dataclasses import asdict

import pytest

from expcast.cli import main
from expcast.config import config_from_dict, default_config, dump_config, load_config
from expcast.errors import ConfigurationError
from expcast.report import RunReport


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        cfg = default_config("ETTh1")
        path = tmp_path / "c.yaml"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg

    def test_overrides(self):
        cfg = config_from_dict({"dataset": {"name": "NP", "path": "np.csv"}, "inference": {"k": 5}, "seed": 3})
        assert cfg.inference.k == 5 and cfg.seed == 3 and cfg.dataset.target_column == "Price"
        assert cfg.dataset.path == "np.csv" and cfg.dataset.L == 168

    def test_unknown_field(self):
        with pytest.raises(ConfigurationError, match="knn"):
            config_from_dict({"dataset": {"name": "NP"}, "inference": {"knn": 5}})

    def test_bad_backend(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"dataset": {"name": "NP"}, "backend": {"kind": "grpc"}})

    def test_mock_needs_script(self):
        with pytest.raises(ConfigurationError, match="mock script"):
            default_config().validate()

    def test_presets(self):
        assert asdict(default_config("ETTm1").dataset.split) == {"train_len": 16896, "val_len": 2496, "test_len": 4896}


class TestExitCodes:
    def test_missing_memory(self, synth_workspace, tmp_path, capsys):
        _, flags = synth_workspace
        code = main(["forecast", *flags, f"--memory={tmp_path / 'none.jsonl'}", f"--report={tmp_path / 'r.jsonl'}"])
        assert code == 1 and "expcast accumulate" in capsys.readouterr().err

    def test_bad_dataset(self, capsys):
        assert main(["forecast", "--dataset", "nope"]) == 1

    def test_ingest_requires_input(self, tmp_path):
        assert main(["ingest", "--output", str(tmp_path / "o.csv")]) == 1

    def test_transport_error(self, synth_workspace, tmp_path, monkeypatch):
        root, flags = synth_workspace
        monkeypatch.delenv("EXPCAST_TEST_KEY", raising=False)
        cfg = tmp_path / "http.yaml"
        cfg.write_text(
            "dataset: {name: synthetic}\n"
            "backend: {kind: http, base_url: 'http://127.0.0.1:9', api_key_env: EXPCAST_TEST_KEY, max_attempts: 1}\n"
        )
        args = [f for f in flags if f.startswith(("--data", "--memory"))]
        rp = tmp_path / "r.jsonl"
        assert main(["forecast", f"--config={cfg}", *args, "--m=1", f"--report={rp}"]) == 2
        # the report is still written, with every instance excluded
        report = RunReport.read(rp)
        assert report.records == [] and len(report.excluded) == 40
        assert {e["error_type"] for e in report.excluded} == {"TransportError"}


class TestCommands:
    def test_ingest_synthetic(self, tmp_path, capsys):
        assert main(["ingest", "--synthetic", "--output", str(tmp_path / "s.csv")]) == 0
        assert (tmp_path / "s.csv").read_text().startswith("timestamp,value,clock")

    def test_manifest(self, synth_workspace):
        root, _ = synth_workspace
        manifest = json.loads((root / "memory.manifest.json").read_text())
        assert manifest["train_test_separated"] is True
        assert manifest["counts"]["pattern"] == manifest["train_instances"] == 80

    def test_forecast_and_evaluate(self, synth_workspace, tmp_path, capsys):
        _, flags = synth_workspace
        rp = tmp_path / "r.jsonl"
        assert main(["forecast", *flags, f"--report={rp}"]) == 0
        report = RunReport.read(rp)
        assert len(report.records) == 40
        assert report.config["memory_digest"] and report.config["split"] == "test"
        capsys.readouterr()
        assert main(["evaluate", "--report", str(rp), "--format", "markdown"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("| report |") and "| 40 |" in out

    def test_evaluate_identity(self, tmp_path, capsys):
        rep = RunReport(records=[{"id": "a", "prediction": [1.0, 2.0], "truth": [1.0, 2.0]}])
        rep.write(tmp_path / "r.jsonl")
        assert main(["evaluate", "--report", str(tmp_path / "r.jsonl")]) == 0
        header, row = capsys.readouterr().out.strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert values["mse"] == "0.000000" and values["mae"] == "0.000000"

    def test_ablate(self, synth_workspace, tmp_path, capsys):
        _, flags = synth_workspace
        out_table = tmp_path / "t.csv"
        assert main(["ablate", *flags, "--m=1", f"--report={tmp_path / 'a.jsonl'}", f"--output={out_table}"]) == 0
        rows = out_table.read_text().strip().splitlines()
        assert rows[0] == "variant,mse,mae,instances,excluded"
        assert [r.split(",")[0] for r in rows[1:]] == ["no-pattern", "no-wisdom", "no-law", "no-adapt", "no-all"]
        assert (tmp_path / "a.no-law.jsonl").exists()
