"""One replication of the end-to-end call-processing and dispatch network."""

from __future__ import annotations

import copy
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate

from .core import EventCalendar, KernelError
from .dispatch import (
    ASSET_TYPES,
    DispatchRequest,
    Fleet,
    TravelModel,
    begin_dispatch,
    complete_dispatch,
    enqueue_pending,
    select_vehicle,
    travel_time,
)
from .metrics import ABANDONED, DROPPED, HANDLED, IN_FLIGHT, SERVED, CallRecord
from .network import DROPPED as POOL_DROPPED
from .network import ENQUEUED, ServerPool, route_call
from .psap import PsapState, assign_call_taker, complete_call_handling, gateway_accept
from .scenario import Scenario
from .threats import apply_service_failure, compile_threat_timeline, fake_arrival_stream
from .traffic import batch_size, next_arrival_time, sample_modality, sample_origin


class _Draws:
    """Pre-drawn variates served through the ``RngStream`` interface.

    Every normal call draws all of its randomness when it is created, so a
    paired attacked run gives each normal call exactly the same service
    requirements and dispatch decisions as the baseline.
    """

    __slots__ = ("u", "e")

    def __init__(self, uniforms, exps):
        self.u = list(uniforms)
        self.e = list(exps)

    def uniform(self) -> float:
        return self.u.pop(0)

    def standard_exponential(self) -> float:
        return self.e.pop(0)


@dataclass
class _Job:
    """Simulator-private companion of a CallRecord."""

    esinet: float
    legacy: float
    gateway: float
    taker: float
    onscene: float
    patience: float = 0.0
    dispatch_u: tuple[float, float] = (1.0, 0.0)
    taker_rate: float | None = None
    target: int | None = None
    direct: bool = False
    swat: bool = False
    threat: int | None = None


@dataclass
class ReplicationResult:
    rep: int
    records: list[CallRecord]
    event_counts: dict[str, int]
    pool_stats: dict[str, dict[str, float]]
    nominal_params: dict[str, tuple]
    final_params: dict[str, tuple]
    horizon: float
    fake_jobs: dict[str, int] = field(default_factory=dict)

    @property
    def normal(self) -> list[CallRecord]:
        return [r for r in self.records if r.provenance == "normal"]


class Simulation:
    def __init__(self, scenario: Scenario, rep: int = 0):
        self.sc = scenario
        self.rep = rep
        plan = scenario.replication
        self.horizon = plan.horizon
        self.streams = plan.streams(rep)
        self.cal = EventCalendar()
        es = scenario.esinet
        self.routers = ServerPool("esinet.routers", es.routers, es.router_rate, es.wait_capacity,
                                  self.cal, "esinet-complete", es.rate_schedule)
        self.psaps = {p.id: PsapState(p, self.cal, self._taker_started) for p in scenario.psaps}
        self.pools: dict[str, ServerPool] = {"esinet.routers": self.routers}
        for ps in self.psaps.values():
            for pool in ps.pools():
                self.pools[pool.name] = pool
        self.fleet = Fleet(copy.deepcopy(scenario.dispatch.stations))
        self.travel: TravelModel = scenario.dispatch.travel
        self.onscene_s = {a: 60.0 * m for a, m in scenario.dispatch.onscene_min.items()}
        mix = scenario.dispatch.asset_mix
        self.asset_cdf = list(accumulate(mix.get(a, 0.0) for a in ASSET_TYPES))
        self.mod_cdf = scenario.modality_mix.cdf()
        self.records: list[CallRecord] = []
        self.jobs: dict[int, _Job] = {}
        self.counts: Counter = Counter()
        self.fake_jobs: Counter = Counter()
        self._saved: dict = {}
        self._next_req = 0
        self._handlers = {
            "arrival": self._on_arrival,
            "esinet-complete": self._on_esinet_complete,
            "legacy-complete": self._on_legacy_complete,
            "gateway-complete": self._on_gateway_complete,
            "taker-complete": self._on_taker_complete,
            "abandon": self._on_abandon,
            "scene-arrival": self._on_scene_arrival,
            "dispatch-complete": self._on_dispatch_complete,
            "vehicle-return": self._on_vehicle_return,
            "threat-start": self._on_threat_start,
            "threat-end": self._on_threat_end,
            "fake-arrival": self._on_fake_arrival,
        }

    # -- driver -----------------------------------------------------------

    def run(self) -> ReplicationResult:
        nominal = {n: p.params() for n, p in self.pools.items()}
        t = next_arrival_time(0.0, self.sc.arrivals, self.streams["arrivals"])
        if t is not None and t < self.horizon:
            self.cal.schedule(t, "arrival")
        compile_threat_timeline(self.sc.threats, self.cal)
        self.cal.schedule(self.horizon, "horizon")
        handlers = self._handlers
        counts = self.counts
        while True:
            ev = self.cal.pop()
            if ev is None or ev.kind == "horizon":
                break
            counts[ev.kind] += 1
            handlers[ev.kind](ev.subject)
        for r in self.records:
            if r.outcome is None:
                r.set_outcome(IN_FLIGHT)
        stats = {
            n: {"offered": p.offered, "accepted": p.accepted, "dropped": p.dropped,
                "completed": p.completed}
            for n, p in self.pools.items()
        }
        return ReplicationResult(
            self.rep, self.records, dict(counts), stats, nominal,
            {n: p.params() for n, p in self.pools.items()}, self.horizon, dict(self.fake_jobs),
        )

    @property
    def now(self) -> float:
        return self.cal.now

    # -- call creation ----------------------------------------------------

    def _new_record(self, **kw) -> CallRecord:
        rec = CallRecord(id=len(self.records), arrival=self.now, **kw)
        self.records.append(rec)
        return rec

    def _on_arrival(self, _):
        arr = self.streams["arrivals"]
        for _ in range(batch_size(self.sc.arrivals, arr)):
            self._create_normal_call()
        t = next_arrival_time(self.now, self.sc.arrivals, arr)
        if t is not None and t < self.horizon:
            self.cal.schedule(t, "arrival")

    def _create_normal_call(self):
        arr, srv, dsp = self.streams["arrivals"], self.streams["service"], self.streams["dispatch"]
        x, y = sample_origin(self.sc.region, arr)
        modality = sample_modality(self.sc.modality_mix, arr, self.mod_cdf)
        unknown = self.streams["routing"].uniform() < self.sc.unknown_location_fraction
        home = self.sc.region.home_psap(x, y)
        rec = self._new_record(modality=modality, x=x, y=y, home_psap=home)
        e = [srv.standard_exponential() for _ in range(6)]
        job = _Job(e[0], e[1], e[2], e[3], e[4], e[5], (dsp.uniform(), dsp.uniform()))
        if unknown:
            job.target = -1
        self.jobs[rec.id] = job
        self._enter_esinet(rec, job)

    def _fake_job(self, th_index: int) -> tuple[CallRecord, _Job]:
        th = self.sc.threats[th_index]
        s = self.streams["threats"]
        e = [s.standard_exponential() for _ in range(5)]
        job = _Job(e[0], e[1], e[2], e[3], e[4], threat=th_index)
        rec = self._new_record(provenance="fake", kind=th.kind, threat=th.id)
        if th.kind == "ddos":
            job.taker_rate = 1.0 / (60.0 * th.screening_min)
            job.target = None if th.target == "esinet" else th.target[int(s.uniform() * len(th.target))]
            return rec, job
        if th.kind == "swatting" and th.target != "esinet":
            pid = th.target[int(s.uniform() * len(th.target))]
            sub = self.sc.region.subregion_of(pid)
            rec.x, rec.y = sub.x0 + s.uniform() * sub.width, sub.y0 + s.uniform() * sub.height
        else:
            rec.x, rec.y = sample_origin(self.sc.region, s)
        rec.home_psap = self.sc.region.home_psap(rec.x, rec.y)
        if th.kind == "tdos":
            rec.modality = th.modality
            if th.target != "esinet":
                job.target = th.target[int(s.uniform() * len(th.target))]
                job.direct = True
        else:
            rec.modality = "voice"
            job.swat = True
            job.dispatch_u = (s.uniform(),)
        return rec, job

    # -- ESInet and routing -----------------------------------------------

    def _enter_esinet(self, rec: CallRecord, job: _Job):
        rec.esinet_entry = self.now
        if self.routers.offer(rec, self.now, self.streams["service"], work=job.esinet) == POOL_DROPPED:
            rec.set_outcome(DROPPED, "esinet.routers")

    def _usage(self) -> dict[int, float]:
        basis = self.sc.esinet.routing.basis
        out = {}
        for pid, ps in self.psaps.items():
            taker = len(ps.takers.busy) / ps.takers.c
            if basis == "call-taker":
                out[pid] = taker
            elif basis == "dispatch":
                out[pid] = self.fleet.usage(pid)
            else:
                out[pid] = max(taker, self.fleet.usage(pid))
        return out

    def _pool_event(self, subject):
        pool, item, token = subject
        if not pool.is_current(item, token):
            return None
        pool.release(item, self.now, self.streams["service"])
        return item

    def _on_esinet_complete(self, subject):
        rec = self._pool_event(subject)
        if rec is None:
            return
        rec.esinet_exit = self.now
        job = self.jobs[rec.id]
        if rec.kind == "ddos":
            if job.target is None:
                rec.set_outcome(HANDLED)
                return
            target = job.target
        else:
            home = None if job.target == -1 else rec.home_psap
            target = route_call(home, self.sc.esinet.routing, self._usage())
            rec.rerouted = home is not None and target != home
        self._deliver(rec, job, target)

    def _deliver(self, rec: CallRecord, job: _Job, pid: int):
        rec.psap = pid
        ps = self.psaps[pid]
        if ps.legacy is not None:
            rec.legacy_entry = self.now
            if ps.legacy.pool.offer(rec, self.now, self.streams["service"], work=job.legacy) == POOL_DROPPED:
                rec.set_outcome(DROPPED, ps.legacy.pool.name)
            return
        self._gateway(rec, job, ps)

    def _on_legacy_complete(self, subject):
        rec = self._pool_event(subject)
        if rec is None:
            return
        rec.legacy_exit = self.now
        self._gateway(rec, self.jobs[rec.id], self.psaps[rec.psap])

    # -- PSAP -------------------------------------------------------------

    def _gateway(self, rec: CallRecord, job: _Job, ps: PsapState):
        if gateway_accept(rec, ps, self.now, self.streams["service"], job.gateway) == POOL_DROPPED:
            rec.set_outcome(DROPPED, ps.gateway.name)

    def _on_gateway_complete(self, subject):
        rec = self._pool_event(subject)
        if rec is None:
            return
        rec.gateway_exit = self.now
        job = self.jobs[rec.id]
        ps = self.psaps[rec.psap]
        res = assign_call_taker(rec, ps, self.now, self.streams["service"], job.taker_rate, job.taker)
        patience = ps.cfg.patience_min
        if res == ENQUEUED and patience is not None and rec.provenance == "normal":
            self.cal.schedule(self.now + job.patience * 60.0 * patience, "abandon", rec)

    def _taker_started(self, rec: CallRecord, now: float):
        if rec.taker_start is None:
            rec.taker_start = now

    def _on_abandon(self, rec: CallRecord):
        if rec.outcome is None and rec.taker_start is None:
            if self.psaps[rec.psap].takers.abandon(rec):
                rec.set_outcome(ABANDONED, self.psaps[rec.psap].takers.name)

    def _on_taker_complete(self, subject):
        pool, rec, token = subject
        if not pool.is_current(rec, token):
            return
        ps = self.psaps[rec.psap]
        job = self.jobs[rec.id]
        if rec.kind in ("ddos", "tdos"):
            rec.taker_end = self.now
            pool.release(rec, self.now, self.streams["service"])
            rec.set_outcome(HANDLED)
            return
        if job.swat:
            th = self.sc.threats[job.threat]
            cdf = list(accumulate(th.asset_mix.get(a, 0.0) for a in ASSET_TYPES))
        else:
            cdf = self.asset_cdf
        req = complete_call_handling(
            rec, ps, self.now, self.streams["service"], _Draws(job.dispatch_u, ()), cdf,
            self._next_req, force_dispatch=job.swat, flagged_false=job.swat,
        )
        if req is None:
            rec.set_outcome(HANDLED)
            return
        self._next_req += 1
        rec.dispatch_created = self.now
        rec.asset = req.asset
        self._dispatch(req)

    # -- dispatch ---------------------------------------------------------

    def _scope(self, req: DispatchRequest):
        return None if self.sc.dispatch.cross_dispatch else frozenset((req.psap,))

    def _dispatch(self, req: DispatchRequest):
        scope = self._scope(req)
        v = select_vehicle(req, self.fleet, self.travel, scope)
        if v is not None:
            self._begin(req, v)
        elif self.sc.dispatch.pending:
            enqueue_pending(self.fleet, req, scope)
        else:
            req.call.set_outcome(DROPPED, "dispatch")

    def _begin(self, req: DispatchRequest, v):
        job = self.jobs[req.call.id]
        arrive, dur = begin_dispatch(req, v, self.now, self.travel, _Draws((), (job.onscene,)),
                                     self.onscene_s[req.asset])
        self.cal.schedule(arrive, "scene-arrival", (req, v, dur))

    def _on_scene_arrival(self, subject):
        req, v, dur = subject
        rec = req.call
        rec.scene_arrival = self.now
        rec.vehicle = v.id
        rec.set_outcome(SERVED)
        self.cal.schedule(self.now + dur, "dispatch-complete", (req, v))

    def _on_dispatch_complete(self, subject):
        req, v = subject
        req.call.dispatch_complete = self.now
        if self.sc.dispatch.return_trip_blocks:
            st = v.station
            back = travel_time((req.x, req.y), (st.x, st.y), self.travel)
            self.cal.schedule(self.now + back, "vehicle-return", v)
        else:
            self._free(v)

    def _on_vehicle_return(self, v):
        self._free(v)

    def _free(self, v):
        for req, v2 in complete_dispatch(self.fleet, v, self.now, self.travel):
            self._begin(req, v2)

    # -- threats ----------------------------------------------------------

    def _on_threat_start(self, k: int):
        th = self.sc.threats[k]
        if th.kind == "malware":
            apply_service_failure(th, self.pools[th.target], "start", self.now,
                                  self.streams["service"], self._saved)
            return
        t = fake_arrival_stream(th, self.now, self.streams["threats"])
        if t is not None and t < self.horizon:
            self.cal.schedule(t, "fake-arrival", k)

    def _on_threat_end(self, k: int):
        th = self.sc.threats[k]
        if th.kind == "malware":
            apply_service_failure(th, self.pools[th.target], "end", self.now,
                                  self.streams["service"], self._saved)

    def _on_fake_arrival(self, k: int):
        th = self.sc.threats[k]
        rec, job = self._fake_job(k)
        self.jobs[rec.id] = job
        self.fake_jobs[th.id] += 1
        if job.direct:
            self._deliver(rec, job, job.target)
        else:
            self._enter_esinet(rec, job)
        t = fake_arrival_stream(th, self.now, self.streams["threats"])
        if t is not None and t < self.horizon:
            self.cal.schedule(t, "fake-arrival", k)


def run_replication(scenario: Scenario, rep: int = 0) -> ReplicationResult:
    """Run one replication; fully determined by ``(base_seed, rep)``."""
    return Simulation(scenario, rep).run()


@dataclass
class BatchResult:
    scenario: Scenario
    results: list[ReplicationResult]

    @property
    def replications(self) -> list[list[CallRecord]]:
        """Per-replication records that count toward statistics (arrival at
        or after the warmup)."""
        w = self.scenario.replication.warmup
        if w <= 0:
            return [r.records for r in self.results]
        return [[c for c in r.records if c.arrival >= w] for r in self.results]

    @property
    def topology(self) -> tuple:
        return self.scenario.topology()


def _run_one(args):
    sc, rep = args
    return run_replication(sc, rep)


def run_batch(scenario: Scenario, n: int | None = None, workers: int = 1, first: int = 0) -> BatchResult:
    """Run replications ``first .. first+n-1``; results come back in rep order."""
    n = scenario.replication.n_replications if n is None else n
    reps = range(first, first + n)
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, [(scenario, r) for r in reps]))
    else:
        results = [run_replication(scenario, r) for r in reps]
    return BatchResult(scenario, results)


def without_threats(scenario: Scenario) -> Scenario:
    sc = copy.deepcopy(scenario)
    sc.threats = []
    return sc


def check_conservation(res: ReplicationResult) -> None:
    """Raise if any normal call lacks exactly one terminal outcome."""
    for r in res.records:
        if r.outcome is None:
            raise KernelError(f"call {r.id} has no outcome")
        if not r.stamps_monotone():
            raise KernelError(f"call {r.id} has out-of-order timestamps")
