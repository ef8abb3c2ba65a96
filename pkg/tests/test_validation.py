import pytest

from ng911sim.oracles import erlang_b_blocking, erlang_c_mean_wait, hypercube_small_instance
from ng911sim.validation import (
    asymmetric_triple,
    colocated_pair,
    des_fleet,
    des_pool,
    format_table,
    run_checks,
)


def test_des_pool_mean_wait_small_run():
    w, se, loss, n = des_pool(1.0, 1.0, 2, None, 100_000, seed=4)
    exp = erlang_c_mean_wait(1, 1, 2)
    assert loss == 0.0 and n >= 100_000
    assert abs(w - exp) < max(0.05 * exp, 4 * se)


def test_des_pool_loss_small_run():
    _, _, loss, _ = des_pool(1.0, 1.0, 2, 0, 100_000, seed=4)
    assert abs(loss - erlang_b_blocking(1.0, 2)) < 0.01


def test_des_fleet_against_exact_solution():
    st, at, mu = asymmetric_triple()
    sol = hypercube_small_instance(st, at, mu)
    busy, occ = des_fleet(st, at, mu, 100_000, seed=2)
    assert abs(occ.sum() - 1) < 1e-9
    assert max(abs(busy - sol.busy)) < 0.02


def test_colocated_pair_des():
    st, at, mu = colocated_pair()
    sol = hypercube_small_instance(st, at, mu)
    busy, occ = des_fleet(st, at, mu, 100_000, seed=3)
    assert abs(occ[3] - sol.pi[3]) < 0.015


def test_kernel_route_passes():
    checks = run_checks(route="kernel")
    assert all(c.passed for c in checks), format_table(checks)
    assert len(checks) == 12


def test_negative_control_detected():
    """A 5% service-rate error must be caught by every queue-wait check."""
    checks = run_checks(route="kernel", rate_error=1.05, kernel_completions=2_000_000)
    waits = [c for c in checks if "erlang-c" in c.name]
    assert waits and not any(c.passed for c in waits)


def test_table_footer():
    checks = run_checks(completions=20_000, route="kernel", kernel_completions=20_000)
    text = format_table(checks)
    assert text.splitlines()[-1].endswith(f"/{len(checks)} checks passed")
