"""Built-in oracle-versus-simulator checks behind the ``validate`` command."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import EventCalendar, RngStream
from .dispatch import DispatchRequest, Fleet, Station, TravelModel, begin_dispatch, select_vehicle
from .network import ServerPool
from .oracles import (
    Atom,
    erlang_b_blocking,
    erlang_c_mean_wait,
    hypercube_small_instance,
    vehicle_preferences,
)

MMC_CASES = [(2.0, 3.0, 1), (1.0, 1.0, 2), (5.0, 1.0, 8)]
LOSS_CASES = [(1.0, 1), (1.0, 2), (5.0, 5)]


@dataclass
class Check:
    name: str
    observed: float
    expected: float
    tolerance: float
    relative: bool
    seconds: float = 0.0

    @property
    def error(self) -> float:
        d = abs(self.observed - self.expected)
        return d / abs(self.expected) if self.relative else d

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def row(self) -> str:
        kind = "rel" if self.relative else "abs"
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<34} {self.observed:>12.6f} {self.expected:>12.6f} "
                f"{self.tolerance:>8.4f} {kind:>4} {self.error:>10.6f} {self.seconds:>7.2f}  {verdict}")


HEADER = (f"{'check':<34} {'observed':>12} {'expected':>12} {'tol':>8} {'kind':>4} "
          f"{'error':>10} {'secs':>7}  result")


def des_pool(lam: float, mu: float, c: int, capacity: int | None, completions: int,
             seed: int = 1, rate_error: float = 1.0, batches: int = 20):
    """Drive a :class:`ServerPool` with Poisson arrivals through the event calendar.

    Runs until ``completions`` services have finished. Returns the mean
    queue wait of started jobs, its batch-means standard error, the drop
    fraction and the arrival count. ``rate_error`` scales the pool's true
    service rate, for negative controls.
    """
    cal = EventCalendar()
    arr = RngStream(seed, "arrivals")
    srv = RngStream(seed, "service")
    pool = ServerPool("check", c, mu * rate_error, capacity, cal, "done")
    cal.schedule(arr.exponential(lam), "arrival")
    n = 0
    item = 0
    step = max(1, completions // batches)
    marks = []
    while pool.completed < completions:
        if pool.completed >= step * (len(marks) + 1) and len(marks) < batches:
            marks.append((pool.wait_sum, pool.started))
        ev = cal.pop()
        if ev.kind == "arrival":
            item += 1
            n += 1
            pool.offer(item, ev.time, srv)
            cal.schedule(ev.time + arr.exponential(lam), "arrival")
        else:
            _, it, _ = ev.subject
            pool.release(it, ev.time, srv)
    wait = pool.wait_sum / pool.started if pool.started else 0.0
    marks.append((pool.wait_sum, pool.started))
    bm = []
    prev = (0.0, 0)
    for ws, st in marks:
        if st > prev[1]:
            bm.append((ws - prev[0]) / (st - prev[1]))
        prev = (ws, st)
    se = float(np.std(bm, ddof=1) / np.sqrt(len(bm))) if len(bm) > 1 else 0.0
    return wait, se, pool.dropped / n, n


def des_fleet(stations: list[Station], atoms: list[Atom], mu, requests: int,
              seed: int = 1) -> np.ndarray:
    """Loss-mode nearest-available dispatch through :class:`Fleet`.

    Travel is made effectively instantaneous so each vehicle's busy period
    is its on-scene time. Returns the time-average busy fraction per vehicle
    and the time-average occupancy of every busy bitmask.
    """
    travel = TravelModel("manhattan", 1e12)
    fleet = Fleet([Station(s.id, s.asset, s.x, s.y, s.vehicles, s.psap) for s in stations])
    mus = np.broadcast_to(np.asarray(mu, float), (len(fleet.vehicles),))
    lam = sum(a.rate for a in atoms)
    cdf = np.cumsum([a.rate for a in atoms]) / lam
    arr = RngStream(seed, "arrivals")
    srv = RngStream(seed, "dispatch")
    cal = EventCalendar()
    busy = np.zeros(len(fleet.vehicles))
    since = np.zeros(len(fleet.vehicles))
    occ = np.zeros(1 << len(fleet.vehicles))
    mask, last = 0, 0.0
    cal.schedule(arr.exponential(lam), "arrival")
    seen = 0
    while seen < requests:
        ev = cal.pop()
        occ[mask] += ev.time - last
        last = ev.time
        if ev.kind == "arrival":
            seen += 1
            a = atoms[arr.choice_index(cdf)]
            asset = fleet.stations[0].asset
            req = DispatchRequest(seen, a.x, a.y, asset, ev.time)
            v = select_vehicle(req, fleet, travel)
            if v is not None:
                arrive, dur = begin_dispatch(req, v, ev.time, travel, srv, 1.0 / mus[v.id])
                since[v.id] = ev.time
                cal.schedule(arrive + dur, "free", v)
                mask = fleet.busy_mask()
            cal.schedule(ev.time + arr.exponential(lam), "arrival")
        else:
            v = ev.subject
            busy[v.id] += ev.time - since[v.id]
            v.status = "available"
            v.request = None
            mask = fleet.busy_mask()
    now = cal.now
    for v in fleet.vehicles:
        if v.status != "available":
            busy[v.id] += now - since[v.id]
    return busy / now, occ / now


def kernel_mmc(lam, mu, c, capacity, n, seed=1):
    rng = np.random.default_rng(seed)
    waits, dropped = kernels.mmc_waits(rng.exponential(1.0 / lam, n), rng.standard_exponential(n),
                                       mu, c, capacity)
    ok = waits[waits >= 0]
    return float(ok.mean()), dropped / n


def kernel_fleet(stations, atoms, mu, n, seed=1):
    rng = np.random.default_rng(seed)
    lam = sum(a.rate for a in atoms)
    p = np.array([a.rate for a in atoms]) / lam
    atom = rng.choice(len(atoms), size=n, p=p)
    pref = vehicle_preferences(stations, atoms, TravelModel())
    occ, _, t = kernels.hypercube_loss(rng.exponential(1.0 / lam, n), atom,
                                       rng.standard_exponential(n), pref, mu)
    masks = np.arange(len(occ))
    return np.array([occ[(masks >> v) & 1 == 1].sum() / t for v in range(pref.shape[1])]), occ / t


def colocated_pair() -> tuple[list[Station], list[Atom], float]:
    return [Station(1, "police", 1.0, 1.0, 2)], [Atom(1.0, 1.0, 1.0)], 1.0


def asymmetric_triple() -> tuple[list[Station], list[Atom], list[float]]:
    stations = [Station(1, "police", 0.0, 0.0, 1), Station(2, "police", 5.0, 0.0, 2)]
    atoms = [Atom(1.0, 0.0, 0.6), Atom(4.0, 0.0, 0.9)]
    return stations, atoms, [1.0, 1.2, 0.8]


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def run_checks(completions: int = 1_000_000, route: str = "both", seed: int = 1,
               rate_error: float = 1.0, kernel_completions: int = 10_000_000) -> list[Check]:
    """All built-in checks. ``route`` is ``des``, ``kernel`` or ``both``.

    The compiled kernel runs ``kernel_completions`` jobs per queue case and
    is held to the fixed tolerances. The event-driven route runs
    ``completions``; its mean-wait tolerance widens to four batch-means
    standard errors whenever that exceeds 2%, since at 10**6 jobs the
    8-server case has a relative standard error near 1.6%.
    """
    routes = ("des", "kernel") if route == "both" else (route,)
    out: list[Check] = []
    for r in routes:
        for lam, mu, c in MMC_CASES:
            exp = erlang_c_mean_wait(lam, mu, c)
            tol = 0.02
            if r == "des":
                (w, se, _, _), dt = _timed(des_pool, lam, mu, c, None, completions, seed, rate_error)
                tol = max(tol, 4.0 * se / exp)
            else:
                (w, _), dt = _timed(kernel_mmc, lam, mu * rate_error, c, None,
                                    kernel_completions, seed)
            out.append(Check(f"{r} erlang-c wq l={lam:g} m={mu:g} c={c}", w, exp, tol, True, dt))
        for a, c in LOSS_CASES:
            exp = erlang_b_blocking(a, c)
            if r == "des":
                (_, _, loss, _), dt = _timed(des_pool, a, 1.0, c, 0, completions, seed, rate_error)
            else:
                (_, loss), dt = _timed(kernel_mmc, a, rate_error, c, 0, completions, seed)
            out.append(Check(f"{r} erlang-b loss a={a:g} c={c}", loss, exp, 0.005, False, dt))
        st, at, mu = colocated_pair()
        sol = hypercube_small_instance(st, at, mu)
        if r == "des":
            (busy, occ), dt = _timed(des_fleet, st, at, mu, completions // 2, seed)
        else:
            (busy, occ), dt = _timed(kernel_fleet, st, at, mu, completions, seed)
        out.append(Check(f"{r} pair P(both busy)", occ[3], sol.pi[3], 0.01, False, dt))
        for v in range(2):
            out.append(Check(f"{r} pair busy v{v}", busy[v], sol.busy[v], 0.01, False, dt))
        st, at, mu = asymmetric_triple()
        sol = hypercube_small_instance(st, at, mu)
        if r == "des":
            (busy, _), dt = _timed(des_fleet, st, at, mu, completions // 2, seed)
        else:
            (busy, _), dt = _timed(kernel_fleet, st, at, mu, completions, seed)
        for v in range(3):
            out.append(Check(f"{r} triple busy v{v}", busy[v], sol.busy[v], 0.01, False, dt))
    return out


def format_table(checks: list[Check]) -> str:
    lines = [HEADER] + [c.row() for c in checks]
    npass = sum(c.passed for c in checks)
    lines.append(f"{npass}/{len(checks)} checks passed")
    return "\n".join(lines)
