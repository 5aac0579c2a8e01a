import json
from collections import OrderedDict

import pytest

from expcast.cli import main
from expcast.data import synthetic_regimes

MOCK_SCRIPT = {"responder": "analog", "options": {"noise": 0.05}}


@pytest.fixture(scope="session")
def synth_workspace(tmp_path_factory):
    """Synthetic two-regime CSV, analog mock script and an accumulated memory."""
    root = tmp_path_factory.mktemp("synth")
    synthetic_regimes(seed=0).to_csv(root / "synth.csv", index=False)
    (root / "mock.json").write_text(json.dumps(MOCK_SCRIPT))
    args = {
        "dataset": "synthetic",
        "data": str(root / "synth.csv"),
        "backend": "mock",
        "mock_script": str(root / "mock.json"),
        "memory": str(root / "memory.jsonl"),
    }
    flags = [f"--{k.replace('_', '-')}={v}" for k, v in args.items()]
    assert main(["accumulate", *flags, "--seed=7"]) == 0
    return root, flags


# -- acceptance summary ---------------------------------------------------

_results: "OrderedDict[int, dict]" = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "ran": False})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed or (rep.when == "setup" and rep.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        r = _results[number]
        status = "PASS" if r["ok"] and r["ran"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {r['title']}")
