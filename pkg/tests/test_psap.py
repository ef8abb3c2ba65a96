import numpy as np
import pytest

from ng911sim.core import ConfigError, EventCalendar, RngStream
from ng911sim.metrics import CallRecord
from ng911sim.network import ACCEPTED, DROPPED, ENQUEUED
from ng911sim.psap import (
    PsapConfig,
    PsapState,
    assign_call_taker,
    complete_call_handling,
    gateway_accept,
)

ASSET_CDF = [0.6, 0.75, 1.0]


def call(k, modality="voice"):
    return CallRecord(id=k, arrival=0.0, modality=modality, x=1.0, y=1.0, home_psap=1, psap=1)


@pytest.fixture
def s():
    return RngStream(1, "service")


def test_idle_gateway_accepts_and_stamps(s):
    ps = PsapState(PsapConfig(1))
    c = call(0)
    assert gateway_accept(c, ps, 3.0, s) == ACCEPTED
    assert c.gateway_entry == 3.0 and ps.accepted == 1


def test_gateway_delay_mean_ten_ms():
    cal = EventCalendar()
    ps = PsapState(PsapConfig(1, gateway_slots=10**5), cal)
    s = RngStream(2, "service")
    n = 10**5
    for k in range(n):
        gateway_accept(call(k), ps, 0.0, s)
    times = []
    while (ev := cal.pop()) is not None:
        times.append(ev.time)
    assert abs(np.mean(times) - 0.01) / 0.01 < 0.02


def test_full_gateway_drops(s):
    ps = PsapState(PsapConfig(1, gateway_slots=50, gateway_capacity=0))
    for k in range(50):
        gateway_accept(call(k), ps, 0.0, s)
    assert gateway_accept(call(99), ps, 0.0, s) == DROPPED
    assert ps.dropped == 1
    assert ps.gateway.dropped + ps.gateway.accepted == ps.gateway.offered


def test_gateway_delay_far_below_taker_delay():
    cal = EventCalendar()
    ps = PsapState(PsapConfig(1, gateway_slots=10**4, call_takers=10**4), cal)
    s = RngStream(3, "service")
    g, t = [], []
    for k in range(10**4):
        c = call(k)
        gateway_accept(c, ps, 0.0, s)
        assign_call_taker(c, ps, 0.0, s)
    while (ev := cal.pop()) is not None:
        (g if ev.kind == "gateway-complete" else t).append(ev.time)
    assert np.mean(g) / np.mean(t) < 0.01


def test_three_idle_takers_then_queue(s):
    ps = PsapState(PsapConfig(1))
    res = [assign_call_taker(call(k), ps, 0.0, s) for k in range(4)]
    assert res == [ACCEPTED, ACCEPTED, ACCEPTED, ENQUEUED]
    assert ps.takers.busy_count == 3


@pytest.mark.parametrize("modality,mean_s", [("voice", 120), ("text", 60), ("voip", 120),
                                              ("image_video", 90)])
def test_handling_time_means(modality, mean_s):
    cal = EventCalendar()
    ps = PsapState(PsapConfig(1, call_takers=10**5), cal)
    s = RngStream(4, "service")
    for k in range(10**5):
        assign_call_taker(call(k, modality), ps, 0.0, s)
    times = [ev.time for ev in iter(cal.pop, None)]
    assert abs(np.mean(times) - mean_s) / mean_s < 0.02


def _dispatch_fraction(p_d, n=10**5):
    ps = PsapState(PsapConfig(1, dispatch_prob=p_d, call_takers=1))
    s, d = RngStream(5, "service"), RngStream(5, "dispatch")
    hits = 0
    for k in range(n):
        c = call(k)
        assign_call_taker(c, ps, 0.0, s)
        req = complete_call_handling(c, ps, 1.0, s, d, ASSET_CDF, k)
        hits += req is not None
    assert ps.takers.busy_count == 0
    return hits / n


def test_dispatch_always():
    assert _dispatch_fraction(1.0, 2000) == 1.0


def test_dispatch_never():
    assert _dispatch_fraction(0.0, 2000) == 0.0


def test_dispatch_fraction_binomial():
    assert abs(_dispatch_fraction(0.8) - 0.8) < 0.005


def test_request_carries_call_origin(s):
    ps = PsapState(PsapConfig(1, dispatch_prob=1.0))
    c = call(0)
    assign_call_taker(c, ps, 0.0, s)
    req = complete_call_handling(c, ps, 5.0, s, RngStream(1, "dispatch"), ASSET_CDF, 7)
    assert (req.x, req.y, req.created_at, req.id) == (1.0, 1.0, 5.0, 7)
    assert req.asset in ("police", "fire", "ambulance")
    assert c.taker_end == 5.0


def test_forced_false_dispatch(s):
    ps = PsapState(PsapConfig(1, dispatch_prob=0.0))
    c = call(0)
    assign_call_taker(c, ps, 0.0, s)
    req = complete_call_handling(c, ps, 1.0, s, RngStream(1, "dispatch"), ASSET_CDF, 0,
                                 force_dispatch=True, flagged_false=True)
    assert req is not None and req.flagged_false


@pytest.mark.parametrize("field,value", [("call_takers", 0), ("gateway_slots", 0),
                                         ("dispatch_prob", 1.5), ("patience_min", 0.0)])
def test_config_validation_names_field(field, value):
    cfg = PsapConfig(1)
    setattr(cfg, field, value)
    with pytest.raises(ConfigError, match=field):
        cfg.validate("psaps[0]")
