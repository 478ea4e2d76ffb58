import json
import time

import pytest

import mosden

T0 = 1_700_000_000_000
SCHEMA = [{"name": "temp", "value_type": "double", "unit": "celsius"}]


def vsd(name, config, sampling=1000, emit=10_000, window=None):
    return {
        "name": name,
        "binding": {"plugin_id": "mosden.sim", "transport": "in_process", "config": config},
        "sampling_interval_ms": sampling,
        "window": window or {"kind": "time", "size": 10_000},
        "aggregations": [{"field": "temp", "fn": "avg"}],
        "emit_interval_ms": emit,
        "history_size": 500,
    }


def test_decide_boundary():
    assert mosden.decide(5, 10) == "process_locally"
    assert mosden.decide(10, 10) == "forward_raw"
    assert mosden.decide(10, 5) == "forward_raw"


def test_plan_batching_wins_when_processing_is_free():
    cost = {"c_proc_per_sample": 0.0, "c_radio_wake": 3.0, "c_per_byte": 0.01}
    p = mosden.plan(cost, 60, 40, 40)
    assert p["strategy"] == "process_locally"


def test_evaluate_window_matches_hand_fold():
    elements = [{"timestamp": t, "values": {"temp": v}} for t, v in [(1, 1.0), (2, 4.0), (3, 7.0), (4, -2.0)]]
    aggs = [{"field": "temp", "fn": fn} for fn in ("avg", "min", "max", "count", "last", "sum")]
    r = mosden.evaluate_window(SCHEMA, elements, "count:3", aggs, 4)
    got = r["agg_values"]
    assert r["sample_count"] == 3
    assert got["temp.avg"] == pytest.approx(3.0)
    assert got["temp.min"] == -2.0
    assert got["temp.max"] == 7.0
    assert got["temp.count"] == 3
    assert got["temp.last"] == -2.0
    assert got["temp.sum"] == pytest.approx(9.0)
    empty = mosden.evaluate_window(SCHEMA, elements, "time:1", aggs, 100)
    assert empty["sample_count"] == 0
    assert empty["agg_values"]["temp.avg"] is None


def test_sim_readings_are_reproducible():
    cfg = {"seed": "4", "kind": "seeded_noise", "timestamp_mode": "synthetic"}
    a = mosden.sim_readings(cfg, 20)
    assert a == mosden.sim_readings(cfg, 20)
    assert a != mosden.sim_readings(dict(cfg, seed="5"), 20)
    assert [e["timestamp"] for e in a[:3]] == [0, 1000, 2000]


def test_errors_carry_codes():
    with pytest.raises(mosden.MosdenError, match="SchemaError"):
        mosden.canonical_vsd({"name": "x"})
    with pytest.raises(mosden.MosdenError):
        mosden.evaluate_window(SCHEMA, [], "weeks:2", [], 0)


def test_canonical_vsd_round_trip():
    doc = vsd("room", {"seed": "1"})
    text = mosden.canonical_vsd(doc)
    assert mosden.canonical_vsd(text) == text
    assert json.loads(text)["name"] == "room"


def test_manual_clock_node():
    with mosden.Node({"node_id": "py"}, start_ms=T0) as node:
        node.activate(vsd("room", {"seed": "1", "kind": "ramp"}))
        node.advance_to(T0 + 9_000)
        latest = node.pull("room")
        assert latest["timestamp"] == T0 + 9_000
        raw = node.pull("room", mode="raw", window="count:4")
        assert len(raw["elements"]) == 4
        proc = node.pull("room", mode="processed")
        assert proc["sample_count"] == 10
        assert node.metrics()["samples_ok"] == 10
        assert node.sensors()[0]["vs_name"] == "room"
        with pytest.raises(mosden.MosdenError, match="UnknownVirtualSensor"):
            node.pull("ghost")


def test_registry_end_to_end():
    with mosden.Registry() as registry:
        url = registry.serve()
        with mosden.Node({"node_id": "live", "registry_url": url, "heartbeat_ms": 500}) as node:
            node.activate(vsd("room", {"seed": "2", "kind": "sine"}, sampling=100, emit=500))
            node.serve()
            node.start()
            deadline = time.time() + 5
            while not registry.records() and time.time() < deadline:
                time.sleep(0.05)
            assert registry.records()
            result = registry.dispatch(
                {"id": "py1", "criteria": {"vs_name": "room"}, "interval_ms": 500, "duration_ms": 2_000}
            )
            assert len(result["subscription_ids"]) == 1
            time.sleep(2.6)
        results = registry.results("py1")
        assert 3 <= len(results) <= 5
        assert [r["sequence_no"] for r in results] == list(range(1, len(results) + 1))


def test_mock_bench_csv():
    csv = mosden.run_bench(
        {"axis": "sensors", "points": [1, 2], "duration_s": 60, "clock": "mock", "queries": 1}
    )
    lines = csv.splitlines()
    assert lines[0] == mosden.bench_csv_header()
    assert len(lines) == 3
    assert lines[1].split(",")[1] == "61"
    assert lines[2].split(",")[1] == "122"
