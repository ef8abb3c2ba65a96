import numpy as np
import pytest

from ng911sim.core import ConfigError, EventCalendar, KernelError, RngStream
from ng911sim.network import (
    ACCEPTED,
    DROPPED,
    ENQUEUED,
    EsinetNode,
    LegacyGateway,
    RoutingPolicy,
    ServerPool,
    legacy_transfer,
    offer_to_pool,
    pool_utilization,
    release_server,
    route_call,
)
from ng911sim.oracles import erlang_b_blocking
from ng911sim.validation import des_pool


@pytest.fixture
def stream():
    return RngStream(1, "service")


def test_idle_pool_accepts(stream):
    assert offer_to_pool(ServerPool("p", 1, 1.0), "a", 0.0, stream) == ACCEPTED


def test_busy_loss_pool_drops(stream):
    p = ServerPool("p", 1, 1.0, wait_capacity=0)
    offer_to_pool(p, "a", 0.0, stream)
    assert offer_to_pool(p, "b", 0.0, stream) == DROPPED
    assert p.dropped == 1


def test_queue_until_capacity(stream):
    p = ServerPool("p", 1, 1.0, wait_capacity=2)
    res = [p.offer(k, 0.0, stream) for k in range(4)]
    assert res == [ACCEPTED, ENQUEUED, ENQUEUED, DROPPED]
    assert p.queue_length == 2


def test_loss_fraction_one_server():
    _, _, loss, _ = des_pool(1.0, 1.0, 1, 0, 200_000, seed=3)
    assert abs(loss - erlang_b_blocking(1.0, 1)) < 0.01


def test_release_with_empty_queue(stream):
    p = ServerPool("p", 2, 1.0)
    p.offer("a", 0.0, stream)
    assert release_server(p, "a", 1.0, stream) is None
    assert p.busy_count == 0


def test_release_starts_head_of_queue(stream):
    p = ServerPool("p", 1, 1.0)
    p.offer("a", 0.0, stream)
    p.offer("b", 0.0, stream)
    assert release_server(p, "a", 1.0, stream) == "b"
    assert p.queue_length == 0 and "b" in p.busy


def test_fifo_order(stream):
    p = ServerPool("p", 1, 1.0)
    for k in "xab":
        p.offer(k, 0.0, stream)
    order = []
    cur = "x"
    for _ in range(2):
        cur = p.release(cur, 1.0, stream)
        order.append(cur)
    assert order == ["a", "b"]


def test_release_on_idle_pool_is_kernel_error(stream):
    with pytest.raises(KernelError):
        ServerPool("p", 1, 1.0).release("ghost", 0.0, stream)


def test_utilization(stream):
    p = ServerPool("p", 2, 1.0)
    assert pool_utilization(p) == 0
    p.offer("a", 0.0, stream)
    assert pool_utilization(p) == 0.5
    p.offer("b", 0.0, stream)
    assert pool_utilization(p) == 1


def test_completion_events_scheduled(stream):
    cal = EventCalendar()
    p = ServerPool("p", 1, 2.0, calendar=cal, completion_kind="done")
    p.offer("a", 0.0, stream, work=1.0)
    ev = cal.pop()
    assert ev.kind == "done" and ev.time == pytest.approx(0.5)
    pool, item, token = ev.subject
    assert pool is p and item == "a" and p.is_current(item, token)


def test_rate_schedule_changes_service_time(stream):
    p = ServerPool("p", 1, 1.0, rate_schedule=[(0.0, 1.0), (10.0, 4.0)])
    assert p.rate_at(5.0) == 1.0 and p.rate_at(12.0) == 4.0


def test_invalid_pools():
    with pytest.raises(ConfigError):
        ServerPool("p", 0, 1.0)
    with pytest.raises(ConfigError):
        ServerPool("p", 1, 0.0)
    with pytest.raises(ConfigError):
        ServerPool("p", 1, 1.0, wait_capacity=-1)


def test_preempted_job_resumes_with_remaining_work(stream):
    cal = EventCalendar()
    p = ServerPool("p", 1, 1.0, calendar=cal, completion_kind="done")
    p.offer("a", 0.0, stream, work=10.0)
    displaced = p.disable(1, 4.0, preempt=True)
    assert displaced == ["a"] and p.busy_count == 0
    p.enable(6.0, stream)
    _, _, _, work, start, dur = p.busy["a"]
    assert start == 6.0 and dur == pytest.approx(6.0)


def test_abandon_removes_waiting_item(stream):
    p = ServerPool("p", 1, 1.0)
    p.offer("a", 0.0, stream)
    p.offer("b", 0.0, stream)
    assert p.abandon("b") and not p.abandon("a")


# routing

USAGE_IDLE = {1: 0.0, 2: 0.0, 3: 0.0}


def test_geographic_base_case():
    assert route_call(2, RoutingPolicy(threshold=0.9), USAGE_IDLE) == 2


def test_overloaded_home_goes_to_least_utilized():
    usage = {1: 1.0, 2: 0.4, 3: 0.2}
    assert route_call(1, RoutingPolicy(threshold=0.9), usage) == 3


def test_reroute_tie_goes_to_lowest_id():
    usage = {1: 1.0, 2: 0.3, 3: 0.3}
    assert route_call(1, RoutingPolicy(threshold=0.5), usage) == 2


def test_all_over_threshold_stays_home():
    usage = {1: 1.0, 2: 1.0, 3: 1.0}
    assert route_call(2, RoutingPolicy(threshold=0.5), usage) == 2


def test_threshold_one_is_purely_geographic():
    rng = np.random.default_rng(0)
    for _ in range(500):
        usage = {p: float(rng.choice([0, 1 / 3, 2 / 3, 1])) for p in (1, 2, 3)}
        home = int(rng.integers(1, 4))
        assert route_call(home, RoutingPolicy(threshold=1.0), usage) == home


def test_unknown_location_rules():
    usage = {1: 0.6, 2: 0.3, 3: 0.9}
    assert route_call(None, RoutingPolicy(unknown_location="least-utilized"), usage) == 2
    assert route_call(None, RoutingPolicy(unknown_location=3), usage) == 3


def test_raising_threshold_can_add_a_reroute():
    # home saturated, the others at 2/3: a low threshold leaves no eligible
    # target so the call stays home; a higher one admits PSAP 2
    usage = {1: 1.0, 2: 2 / 3, 3: 2 / 3}
    assert route_call(1, RoutingPolicy(threshold=0.5), usage) == 1
    assert route_call(1, RoutingPolicy(threshold=0.7), usage) == 2


def test_routing_policy_validation():
    with pytest.raises(ConfigError):
        RoutingPolicy(threshold=0.0).validate([1, 2])
    with pytest.raises(ConfigError):
        RoutingPolicy(basis="random").validate([1, 2])
    with pytest.raises(ConfigError):
        RoutingPolicy(unknown_location=9).validate([1, 2])


def test_esinet_needs_psaps():
    with pytest.raises(ConfigError):
        EsinetNode(ServerPool("r", 1, 1.0), [])


# legacy transfer

def test_non_legacy_bypass(stream):
    assert legacy_transfer("call", None, 0.0, stream) is None


def test_legacy_delay_mean():
    cal = EventCalendar()
    s = RngStream(2, "service")
    gw = LegacyGateway(ServerPool("leg", 10**6, 2.0, calendar=cal, completion_kind="done"))
    n = 10**5
    for k in range(n):
        legacy_transfer(k, gw, 0.0, s)
    total = 0.0
    while (ev := cal.pop()) is not None:
        total += ev.time
    assert abs(total / n - 0.5) / 0.5 < 0.02


def test_legacy_loss_boundary(stream):
    gw = LegacyGateway(ServerPool("leg", 1, 2.0, wait_capacity=0))
    legacy_transfer("a", gw, 0.0, stream)
    assert legacy_transfer("b", gw, 0.0, stream) == DROPPED
