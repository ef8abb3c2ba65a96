import copy
import math

import numpy as np
import pytest

from ng911sim.core import ConfigError, EventCalendar, RngStream
from ng911sim.network import ServerPool
from ng911sim.simulator import BatchResult, run_batch, run_replication, without_threats
from ng911sim.threats import (
    ComparisonError,
    ThreatSpec,
    apply_service_failure,
    attack_impact_report,
    compile_threat_timeline,
    fake_arrival_stream,
)

from conftest import with_threat


def test_timeline_start_and_end():
    cal = EventCalendar()
    compile_threat_timeline([ThreatSpec("d", "ddos", 3600.0, 300.0, rate=1.0)], cal)
    evs = [cal.pop(), cal.pop()]
    assert [(e.time, e.kind) for e in evs] == [(3600.0, "threat-start"), (3900.0, "threat-end")]


def test_active_window_half_open():
    th = ThreatSpec("d", "ddos", 3600.0, 300.0)
    assert th.active(3600.0) and th.active(3899.9) and not th.active(3900.0)


def test_zero_rate_stream_is_empty():
    th = ThreatSpec("d", "ddos", 0.0, 100.0, rate=0.0)
    assert fake_arrival_stream(th, 0.0, RngStream(1, "threats")) is None


def test_stream_stops_at_end():
    th = ThreatSpec("d", "ddos", 0.0, 10.0, rate=5.0)
    s = RngStream(1, "threats")
    t, n = 0.0, 0
    while (t := fake_arrival_stream(th, t, s)) is not None:
        assert t < 10.0
        n += 1
    assert n > 0


def test_fake_count_poisson():
    sc = with_threat("tdos_voip")
    counts = [run_replication(sc, r).fake_jobs.get("tdos-voip", 0) for r in range(25)]
    expected = 6 * 20
    assert abs(np.mean(counts) - expected) < 4 * math.sqrt(expected / len(counts))


def test_fake_records_partitioned():
    res = run_replication(with_threat("tdos_voip"), 0)
    fake = [r for r in res.records if r.provenance == "fake"]
    assert len(fake) == res.fake_jobs["tdos-voip"]
    assert all(r.threat == "tdos-voip" and r.kind == "tdos" for r in fake)
    assert all(r.provenance == "normal" and r.threat is None for r in res.normal)
    ids = [r.id for r in res.records]
    assert len(set(ids)) == len(ids)


def test_swatting_generates_dispatches_in_target():
    res = run_replication(with_threat("swatting"), 0)
    fake = [r for r in res.records if r.provenance == "fake"]
    assert fake
    assert all(r.psap == 3 for r in fake if r.psap is not None)
    assert any(r.asset is not None for r in fake)


def _pool():
    return ServerPool("p", 1, 1.0, None, EventCalendar(), "done")


def test_slow_mode_doubles_service_time():
    s = RngStream(1, "service")
    pool = _pool()
    th = ThreatSpec("m", "malware", 0.0, 10.0, target="p", mode="slow", rate_multiplier=0.5)
    pool.offer("a", 0.0, s, work=1.0)
    base = pool.busy["a"][5]
    pool.release("a", base, s)
    apply_service_failure(th, pool, "start", base, s, saved := {})
    pool.offer("b", base, s, work=1.0)
    assert pool.busy["b"][5] == pytest.approx(2 * base)
    apply_service_failure(th, pool, "end", base, s, saved)
    assert pool.rate_multiplier == 1.0


def test_disable_too_many_servers():
    th = ThreatSpec("m", "malware", 0.0, 10.0, target="p", servers=2)
    with pytest.raises(ConfigError):
        apply_service_failure(th, _pool(), "start", 0.0, RngStream(1, "service"), {})


def test_restore_exact_after_disable():
    s = RngStream(1, "service")
    pool = ServerPool("p", 3, 1.0, None, EventCalendar(), "done")
    before = pool.params()
    for k in range(5):
        pool.offer(k, 0.0, s)
    th = ThreatSpec("m", "malware", 1.0, 10.0, target="p", servers=3)
    saved = {}
    displaced = apply_service_failure(th, pool, "start", 0.5, s, saved)
    assert len(displaced) == 3 and pool.busy_count == 0
    apply_service_failure(th, pool, "end", 10.5, s, saved)
    assert pool.params() == before and pool.busy_count == 3


def test_simulation_restores_parameters():
    for name in ("malware_takers", "ddos_5min", "tdos_voip", "swatting"):
        res = run_replication(with_threat(name), 0)
        assert res.final_params == res.nominal_params, name


def test_malware_validation_errors():
    with pytest.raises(ConfigError):
        with_threat("malware_takers", **{"threats.0.target": '"psap9.takers"'})
    with pytest.raises(ConfigError):
        with_threat("malware_takers", **{"threats.0.mode": '"slow"', "threats.0.rate_multiplier": 1.5})


def test_impact_report_zero_when_untouched():
    sc = with_threat("tdos_voip")
    base = run_batch(without_threats(sc), 3)
    same = run_batch(without_threats(sc), 3)
    rep = attack_impact_report(base, same)
    for scope in ("region", "psap1", "psap2", "psap3"):
        assert all(v == 0 for v in rep[scope]["delta"].values() if v is not None)


def test_impact_report_rejects_mismatch():
    sc = with_threat("tdos_voip")
    base = run_batch(without_threats(sc), 2)
    with pytest.raises(ComparisonError):
        attack_impact_report(base, BatchResult(base.scenario, base.results[:1]))
    other = copy.deepcopy(base.scenario)
    other.psaps = other.psaps[:2]
    with pytest.raises(ComparisonError):
        attack_impact_report(base, BatchResult(other, base.results))
