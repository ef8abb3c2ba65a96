import numpy as np
import pytest

from ng911sim.dispatch import Station
from ng911sim.oracles import (
    Atom,
    InstabilityError,
    MarkovChainSpec,
    SizeError,
    SolverError,
    ctmc_steady_state,
    erlang_b_blocking,
    erlang_b_direct,
    erlang_c_mean_wait,
    hypercube_small_instance,
)


def test_erlang_b_values():
    assert erlang_b_blocking(0.0, 3) == 0.0
    assert erlang_b_blocking(1.0, 1) == pytest.approx(0.5)
    assert erlang_b_blocking(1.0, 2) == pytest.approx(0.2)


def test_erlang_b_recursion_matches_direct_sum():
    for c in range(1, 21):
        for a in np.linspace(0.0, 10.0, 21):
            assert abs(erlang_b_blocking(a, c) - erlang_b_direct(a, c)) < 1e-12


def test_erlang_c_values():
    assert erlang_c_mean_wait(2, 3, 1) == pytest.approx(2 / 3)
    assert erlang_c_mean_wait(1, 1, 2) == pytest.approx(1 / 3)
    assert erlang_c_mean_wait(1e-9, 1, 2) < 1e-12
    assert erlang_c_mean_wait(0.0, 1, 2) == 0.0


def test_erlang_c_instability():
    with pytest.raises(InstabilityError):
        erlang_c_mean_wait(3, 1, 3)


def test_two_state_symmetric():
    spec = MarkovChainSpec.from_rates([0, 1], {(0, 1): 2.0, (1, 0): 2.0})
    assert np.allclose(ctmc_steady_state(spec), [0.5, 0.5])


def test_mm22_solve():
    spec = MarkovChainSpec.from_rates([0, 1, 2], {(0, 1): 1, (1, 2): 1, (1, 0): 1, (2, 1): 2})
    assert np.allclose(ctmc_steady_state(spec), [0.4, 0.4, 0.2], atol=1e-12)


def test_residual_and_normalization():
    rng = np.random.default_rng(3)
    Q = rng.uniform(0, 2, (6, 6))
    np.fill_diagonal(Q, 0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    pi = ctmc_steady_state(MarkovChainSpec(list(range(6)), Q))
    assert abs(pi.sum() - 1) < 1e-12 and (pi >= 0).all()
    assert np.abs(pi @ Q).max() < 1e-10


def test_reducible_chain_rejected():
    spec = MarkovChainSpec.from_rates([0, 1, 2], {(0, 1): 1.0, (1, 0): 1.0, (2, 0): 1.0})
    with pytest.raises(SolverError):
        ctmc_steady_state(spec)


def test_bad_rows_rejected():
    with pytest.raises(SolverError):
        MarkovChainSpec([0, 1], np.array([[-1.0, 2.0], [1.0, -1.0]]))
    with pytest.raises(SolverError):
        MarkovChainSpec([0, 1], np.array([[1.0, -1.0], [1.0, -1.0]]))


def test_single_vehicle_is_mm11():
    a = 0.7
    sol = hypercube_small_instance([Station(1, "police", 0, 0, 1)], [Atom(1, 1, a)], 1.0)
    assert sol.busy[0] == pytest.approx(a / (1 + a))


def test_colocated_pair_split_ties():
    sol = hypercube_small_instance([Station(1, "police", 0, 0, 2)], [Atom(1, 1, 1.0)], 1.0,
                                   tie="split")
    assert np.allclose(sol.busy, [0.4, 0.4])
    assert sol.pi[3] == pytest.approx(0.2)


def test_colocated_pair_lowest_id():
    sol = hypercube_small_instance([Station(1, "police", 0, 0, 2)], [Atom(1, 1, 1.0)], 1.0)
    assert sol.pi[3] == pytest.approx(0.2)
    assert sol.busy.sum() == pytest.approx(0.8)
    assert sol.busy[0] > sol.busy[1]


def test_nearer_station_busier():
    st = [Station(1, "police", 0, 0, 1), Station(2, "police", 10, 0, 1)]
    sol = hypercube_small_instance(st, [Atom(2, 0, 1.0)], 1.0)
    assert sol.busy[0] > sol.busy[1]


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_colocated_reduces_to_erlang_b(n):
    a = 1.3
    sol = hypercube_small_instance([Station(1, "fire", 0, 0, n)], [Atom(0, 0, a)], 1.0)
    assert sol.loss == pytest.approx(erlang_b_blocking(a, n), abs=1e-12)


def test_size_limit():
    with pytest.raises(SizeError):
        hypercube_small_instance([Station(1, "police", 0, 0, 13)], [Atom(0, 0, 1)], 1.0)


def test_central_station_busier_under_uniform_demand():
    st = [Station(1, "police", 5, 0, 1), Station(2, "police", 9, 0, 1)]
    atoms = [Atom(x + 0.5, 0, 0.1) for x in range(10)]
    sol = hypercube_small_instance(st, atoms, 1.0)
    assert sol.busy[0] > sol.busy[1]
