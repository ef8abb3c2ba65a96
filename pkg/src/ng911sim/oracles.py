"""Closed-form and exact-solve ground truth for small queueing instances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispatch import Station, TravelModel


class InstabilityError(ValueError):
    """Offered load at or above capacity; no steady state exists."""


class SolverError(ValueError):
    """The chain is malformed, reducible or numerically singular."""


class SizeError(ValueError):
    """State space too large for an exact solve."""


def erlang_b_blocking(a: float, c: int) -> float:
    """Blocking probability of an M/M/c/c system with offered load ``a``."""
    if a < 0:
        raise ValueError("offered load must be >= 0")
    if c < 1:
        raise ValueError("server count must be >= 1")
    b = 1.0
    for k in range(1, c + 1):
        b = a * b / (k + a * b)
    return b


def erlang_b_direct(a: float, c: int) -> float:
    """Same quantity by direct summation, kept as a cross-check."""
    terms = [a**k / math.factorial(k) for k in range(c + 1)]
    return terms[-1] / sum(terms)


def erlang_c_wait_probability(lam: float, mu: float, c: int) -> float:
    if not lam < c * mu:
        raise InstabilityError(f"lambda={lam} >= c*mu={c * mu}")
    if lam == 0:
        return 0.0
    a = lam / mu
    b = erlang_b_blocking(a, c)
    rho = a / c
    return b / (1.0 - rho + rho * b)


def erlang_c_mean_wait(lam: float, mu: float, c: int) -> float:
    """Mean time in queue of an M/M/c system, in the units of ``1/lam``."""
    if lam < 0 or not mu > 0 or c < 1:
        raise ValueError("need lam >= 0, mu > 0, c >= 1")
    pw = erlang_c_wait_probability(lam, mu, c)
    return pw / (c * mu - lam)


@dataclass
class MarkovChainSpec:
    """Finite CTMC. ``Q[i, j]`` is the rate from ``states[i]`` to ``states[j]``."""

    states: list
    Q: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        n = len(self.states)
        if self.Q.shape != (n, n):
            raise SolverError(f"rate matrix shape {self.Q.shape} does not match {n} states")
        off = self.Q - np.diag(np.diag(self.Q))
        if (off < 0).any():
            raise SolverError("off-diagonal rates must be >= 0")
        scale = max(1.0, float(np.abs(self.Q).max(initial=0.0)))
        if np.abs(self.Q.sum(axis=1)).max(initial=0.0) > 1e-12 * scale:
            raise SolverError("rows of the rate matrix must sum to 0")

    @classmethod
    def from_rates(cls, states: list, rates: dict) -> "MarkovChainSpec":
        """Build from ``{(from_state, to_state): rate}``; the diagonal is filled in."""
        idx = {s: k for k, s in enumerate(states)}
        Q = np.zeros((len(states), len(states)))
        for (a, b), r in rates.items():
            if a != b:
                Q[idx[a], idx[b]] += r
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return cls(list(states), Q)


def _irreducible(Q: np.ndarray) -> bool:
    adj = (Q - np.diag(np.diag(Q))) > 0
    n = len(Q)
    for a in (adj, adj.T):
        seen = np.zeros(n, bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(a[i] & ~seen):
                seen[j] = True
                frontier.append(int(j))
        if not seen.all():
            return False
    return True


def ctmc_steady_state(spec: MarkovChainSpec) -> np.ndarray:
    """Stationary distribution by a dense solve with one balance equation
    swapped for the normalization."""
    Q = spec.Q
    n = len(Q)
    if n == 1:
        return np.ones(1)
    if not _irreducible(Q):
        raise SolverError("chain is reducible")
    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular system: {exc}") from None
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if (pi < -1e-12).any():
        raise SolverError("solution has negative mass")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = float(np.abs(pi @ Q).max())
    if resid >= 1e-10 * max(1.0, float(np.abs(Q).max())):
        raise SolverError(f"residual {resid:.3e} too large")
    return pi


@dataclass
class Atom:
    """A demand point with Poisson request rate ``rate``."""

    x: float
    y: float
    rate: float


@dataclass
class HypercubeSolution:
    busy: np.ndarray  # per-vehicle busy probability
    pi: np.ndarray  # stationary mass indexed by busy bitmask
    loss: float  # probability an arriving request finds every vehicle busy

    def p_state(self, busy_ids) -> float:
        return float(self.pi[sum(1 << v for v in busy_ids)])


MAX_VEHICLES = 12


def vehicle_preferences(stations: list[Station], atoms: list[Atom], travel: TravelModel) -> np.ndarray:
    """Per-atom vehicle order: distance, then station id, then vehicle id.

    Vehicle ids are assigned station-major in station-id order, exactly as
    :class:`~ng911sim.dispatch.Fleet` does.
    """
    vehicles = []
    for s in sorted(stations, key=lambda s: s.id):
        vehicles += [s] * s.vehicles
    pref = np.empty((len(atoms), len(vehicles)), dtype=np.int64)
    for i, a in enumerate(atoms):
        keys = [(travel.distance(s.x, s.y, a.x, a.y), s.id, v) for v, s in enumerate(vehicles)]
        pref[i] = [k[2] for k in sorted(keys)]
    return pref


def hypercube_small_instance(
    stations: list[Station],
    atoms: list[Atom],
    mu,
    travel: TravelModel | None = None,
    tie: str = "lowest",
) -> HypercubeSolution:
    """Exact busy probabilities of a loss-mode nearest-available fleet.

    ``mu`` is a scalar or per-vehicle service rate. ``tie="lowest"`` sends
    a request to the lowest-id vehicle among equally near free ones (the
    simulator's rule); ``tie="split"`` shares it equally among them.
    """
    travel = travel or TravelModel()
    n = sum(s.vehicles for s in stations)
    if n > MAX_VEHICLES:
        raise SizeError(f"{n} vehicles exceed the exact-solve limit of {MAX_VEHICLES}")
    if n < 1:
        raise SizeError("need at least one vehicle")
    if tie not in ("lowest", "split"):
        raise ValueError("tie must be 'lowest' or 'split'")
    mus = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
    vehicles = []
    for s in sorted(stations, key=lambda s: s.id):
        vehicles += [s] * s.vehicles
    pref = vehicle_preferences(stations, atoms, travel)
    dist = np.array([[travel.distance(s.x, s.y, a.x, a.y) for s in vehicles] for a in atoms])
    size = 1 << n
    Q = np.zeros((size, size))
    for m in range(size):
        for v in range(n):
            if m >> v & 1:
                Q[m, m & ~(1 << v)] += mus[v]
        for i, a in enumerate(atoms):
            free = [v for v in pref[i] if not m >> v & 1]
            if not free:
                continue
            if tie == "lowest":
                Q[m, m | 1 << free[0]] += a.rate
            else:
                d0 = dist[i, free[0]]
                near = [v for v in free if dist[i, v] == d0]
                for v in near:
                    Q[m, m | 1 << v] += a.rate / len(near)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    pi = ctmc_steady_state(MarkovChainSpec(list(range(size)), Q))
    masks = np.arange(size)
    busy = np.array([pi[(masks >> v) & 1 == 1].sum() for v in range(n)])
    return HypercubeSolution(busy, pi, float(pi[size - 1]))
