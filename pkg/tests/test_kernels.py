import numpy as np
import pytest

from ng911sim import kernels
from ng911sim.dispatch import TravelModel
from ng911sim.oracles import erlang_b_blocking, erlang_c_mean_wait, vehicle_preferences
from ng911sim.validation import asymmetric_triple

try:
    kernels._backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")


def inputs(lam, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.exponential(1 / lam, n), rng.standard_exponential(n)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.mmc_waits([1.0], [1.0], 1.0, 1, backend="fortran")


@needs_ext
@pytest.mark.parametrize("c,cap", [(1, None), (3, None), (2, 0), (4, 2)])
def test_backends_bit_identical_queue(c, cap):
    ia, w = inputs(2.5, 20_000)
    a = kernels.mmc_waits(ia, w, 1.0, c, cap, backend="python")
    b = kernels.mmc_waits(ia, w, 1.0, c, cap, backend="cython")
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


@needs_ext
def test_backends_bit_identical_fleet():
    st, atoms, mu = asymmetric_triple()
    pref = vehicle_preferences(st, atoms, TravelModel())
    rng = np.random.default_rng(1)
    n = 20_000
    atom = rng.integers(0, 2, n)
    ia, w = inputs(1.5, n, 2)
    a = kernels.hypercube_loss(ia, atom, w, pref, mu, backend="python")
    b = kernels.hypercube_loss(ia, atom, w, pref, mu, backend="cython")
    assert np.array_equal(a[0], b[0]) and a[1:] == b[1:]


def test_hand_trace_single_server():
    # arrivals at 1, 2, 3; service 2 each; FIFO waits 0, 1, 2
    waits, dropped = kernels.mmc_waits([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], 1.0, 1)
    assert list(waits) == [0.0, 1.0, 2.0] and dropped == 0


def test_hand_trace_capacity_one():
    waits, dropped = kernels.mmc_waits([1.0, 0.1, 0.1], [5.0, 5.0, 5.0], 1.0, 1, 1)
    assert waits[2] == -1.0 and dropped == 1


def test_kernel_against_closed_forms():
    ia, w = inputs(1.0, 400_000, 5)
    waits, _ = kernels.mmc_waits(ia, w, 1.0, 2)
    assert abs(waits.mean() - erlang_c_mean_wait(1, 1, 2)) / (1 / 3) < 0.03
    _, d = kernels.mmc_waits(ia, w, 1.0, 2, 0)
    assert abs(d / len(ia) - erlang_b_blocking(1.0, 2)) < 0.005


def test_occupancy_sums_to_time():
    st, atoms, mu = asymmetric_triple()
    pref = vehicle_preferences(st, atoms, TravelModel())
    ia, w = inputs(1.5, 10_000, 3)
    occ, lost, t = kernels.hypercube_loss(ia, np.zeros(10_000, int), w, pref, mu)
    assert occ.sum() == pytest.approx(t)
    assert 0 < lost < 10_000
