import numpy as np
import pytest

from expcast.accumulation import (
    AccumulationConfig,
    TrajectoryRecord,
    abstract_patterns,
    accumulate,
    fallback_laws,
    induce_laws,
    merge_laws,
    parse_law_reply,
    partition,
    resolve_error_tau,
    textualize_features,
    training_sweep,
)
from expcast.errors import TransportError, ValidationError
from expcast.gateway import Gateway, MockBackend, analog_responder
from expcast.inference import InferenceConfig
from expcast.laws import GeneralLaw, check_laws
from expcast.memory import MemoryStore
from expcast.similarity import FeatureVector

from .helpers import instance, synthetic_windows


def rec(err, iid="a"):
    return TrajectoryRecord(iid, "text", np.zeros(3), err, anchor=np.arange(8.0))


def analog_gateway(seed=0, noise=0.0):
    return Gateway(MockBackend(responder=analog_responder(noise), seed=seed))


class TestPartition:
    def test_boundary(self):
        pos, neg = partition([rec(0.99), rec(1.0), rec(1.01)], 1.0)
        assert [r.error for r in pos] == [0.99]
        assert [r.error for r in neg] == [1.0, 1.01]

    def test_tau_resolution(self):
        records = [rec(e) for e in (1.0, 2.0, 3.0, 4.0)]
        assert resolve_error_tau(records, AccumulationConfig())["value"] == 2.5
        assert resolve_error_tau(records, AccumulationConfig(error_tau=0.7))["value"] == 0.7
        with pytest.raises(ValidationError):
            resolve_error_tau([], AccumulationConfig())


def test_textualize():
    fv = FeatureVector((1.0, 0.5, 0.25, 0.9, 0.8, 0.7, -2.0, 4.0, 0.125))
    assert textualize_features(fv) == (
        "The series has mean 1.0000, standard deviation 0.5000, trend slope 0.2500, "
        "lag-1 autocorrelation 0.9000, lag-2 autocorrelation 0.8000, lag-3 autocorrelation 0.7000, "
        "minimum -2.0000, maximum 4.0000, skewness 0.1250."
    )


class TestLawParsing:
    def test_records(self):
        reply = (
            "Here are the laws:\n<laws>\n"
            '{"type": "range", "lo": 36.12, "hi": 65.29}\n'
            '{"type": "max_step", "limit": 2.06, "reference": "vs_last_observation"}\n'
            '{"type": "range", "lo": 9, "hi": 1}\n'
            "prices stay calm\n"
            "</laws>"
        )
        laws, rejected = parse_law_reply(reply)
        assert [l.law_type for l in laws] == ["range", "max_step"]
        assert laws[0].params == {"lo": 36.12, "hi": 65.29}
        assert len(rejected) == 2

    def test_nothing(self):
        laws, rejected = parse_law_reply("no idea")
        assert laws == [] and rejected

    def test_merge(self):
        laws = [
            GeneralLaw(0, "range", {"lo": 0.0, "hi": 5.0}),
            GeneralLaw(0, "range", {"lo": -1.0, "hi": 3.0}),
            GeneralLaw(0, "non_negativity"),
            GeneralLaw(0, "non_negativity"),
            GeneralLaw(0, "max_step", {"limit": 1.0, "reference": "vs_last_observation"}),
            GeneralLaw(0, "max_step", {"limit": 2.0, "reference": "vs_last_observation"}),
        ]
        merged = merge_laws(laws)
        assert [(l.law_type, l.params) for l in merged] == [
            ("non_negativity", {}),
            ("range", {"lo": -1.0, "hi": 5.0}),
            ("max_step", {"limit": 2.0, "reference": "vs_last_observation"}),
        ]

    def test_fallback(self):
        inst = instance([0.0, 2.0, 0.0, 2.0], H=2, target=[0.0, 2.0])
        (law,) = fallback_laws([inst])
        assert law.params == {"lo": -3.0, "hi": 5.0}


class TestStages:
    def test_patterns_skip_failures(self):
        train = [instance(np.arange(8.0) + i, target=[1.0, 2.0, 3.0], iid=f"t{i}") for i in range(3)]
        m = MemoryStore()
        ids = abstract_patterns(train, m, Gateway(MockBackend(replies=["one", " ", "three"])))
        assert ids == [0, 1] and [e.provenance for e in m.entries("pattern")] == [("t0",), ("t2",)]

    def test_sweep_excludes_own_pattern(self):
        train = synthetic_windows()[:12]
        m = MemoryStore()
        g = analog_gateway()
        abstract_patterns(train, m, g)
        records = training_sweep(train, m, g, InferenceConfig())
        assert len(records) == 12
        # an own-pattern leak would forecast the exact continuation
        assert all(r.error > 0 for r in records)

    def test_non_negative_law_on_positive_data(self):
        train = synthetic_windows()[:40]
        m = MemoryStore()
        out = induce_laws(train, m, analog_gateway(), AccumulationConfig(law_cluster_count=3))
        types = {l.law_type for l in m.laws}
        assert "non_negativity" in types and not out["fallback"]
        values = np.concatenate([np.concatenate([i.lookback, i.target]) for i in train])
        assert check_laws(values, values[0], m.laws) == []

    def test_fallback_when_nothing_compiles(self):
        train = synthetic_windows()[:10]
        m = MemoryStore()
        out = induce_laws(train, m, Gateway(MockBackend(replies=["nothing useful"] * 5)), AccumulationConfig(law_cluster_count=5))
        assert out["fallback"] and m.laws[0].law_type == "range"

    def test_near_duplicate_wisdom_is_replaced(self):
        m = MemoryStore()
        a = np.sin(np.arange(24.0))
        m.insert_wisdom_filtered("wisdom_pos", a, "first", None)
        out = m.insert_wisdom_filtered("wisdom_pos", a + 1e-6, "second", None)
        assert out.action == "replaced" and m.counts()["wisdom_pos"] == 1


def test_accumulate_end_to_end():
    train = synthetic_windows()[:60]
    m = MemoryStore()
    manifest = accumulate(train, m, analog_gateway(seed=1, noise=0.05), AccumulationConfig(seed=1), InferenceConfig())
    c = manifest["counts"]
    assert c["pattern"] == 60 and c["law"] >= 1
    assert c["wisdom_pos"] + c["wisdom_neg"] >= 2
    assert manifest["dtw_tau"] == m.similarity.dtw_tau > 0
    assert manifest["max_source_offset"] == train[-1].target_end - 1

    again = MemoryStore()
    accumulate(train, again, analog_gateway(seed=1, noise=0.05), AccumulationConfig(seed=1), InferenceConfig())
    assert again == m

    m.freeze()
    with pytest.raises(ValidationError):
        accumulate(train, m, analog_gateway(), AccumulationConfig(), InferenceConfig())


def test_all_summaries_lost_to_transport():
    class Down(MockBackend):
        def complete(self, *a, **k):
            raise TransportError("connection refused")

    train = [instance(np.arange(8.0), target=[1.0, 2.0, 3.0], iid=f"t{i}") for i in range(2)]
    with pytest.raises(TransportError, match="every pattern summary"):
        abstract_patterns(train, MemoryStore(), Gateway(Down(replies=[])))
