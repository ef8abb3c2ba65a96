"""Spatial dispatch of response vehicles (hypercube-style nearest available)."""

from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, KernelError, RngStream

ASSET_TYPES = ("police", "fire", "ambulance")

AVAILABLE = "available"
DISPATCHED = "dispatched"


@dataclass
class Station:
    id: int
    asset: str
    x: float
    y: float
    vehicles: int = 2
    psap: int = 1


@dataclass
class Vehicle:
    id: int
    station: Station
    status: str = AVAILABLE
    request: int | None = None

    @property
    def asset(self) -> str:
        return self.station.asset


@dataclass
class DispatchRequest:
    id: int
    x: float
    y: float
    asset: str
    created_at: float
    psap: int = 1
    flagged_false: bool = False
    call: object = None


@dataclass
class TravelModel:
    metric: str = "manhattan"
    speed_mph: float = 30.0

    def validate(self, path: str = "dispatch.travel") -> None:
        if self.metric not in ("manhattan", "euclidean"):
            raise ConfigError(f"{path}.metric: expected manhattan | euclidean")
        if not self.speed_mph > 0:
            raise ConfigError(f"{path}.speed_mph: must be > 0")

    def distance(self, ax: float, ay: float, bx: float, by: float) -> float:
        if self.metric == "manhattan":
            return abs(ax - bx) + abs(ay - by)
        return math.hypot(ax - bx, ay - by)


def travel_time(a: tuple[float, float], b: tuple[float, float], travel: TravelModel) -> float:
    """Seconds to cover the distance between two points at the model speed."""
    return travel.distance(a[0], a[1], b[0], b[1]) / travel.speed_mph * 3600.0


class Fleet:
    """All stations and vehicles of a scenario plus the pending-request queues.

    Vehicle ids are assigned station by station in station-id order, so the
    lowest-id tie rule is the same everywhere (simulator and oracle).
    """

    def __init__(self, stations: list[Station]):
        ids = [s.id for s in stations]
        if len(set(ids)) != len(ids):
            raise ConfigError("dispatch.stations: duplicate station ids")
        self.stations = sorted(stations, key=lambda s: s.id)
        self.vehicles: list[Vehicle] = []
        self._by_station: dict[int, list[Vehicle]] = {}
        for s in self.stations:
            if s.asset not in ASSET_TYPES:
                raise ConfigError(f"dispatch.stations[{s.id}].asset: unknown asset {s.asset!r}")
            if s.vehicles < 1:
                raise ConfigError(f"dispatch.stations[{s.id}].vehicles: must be >= 1")
            vs = []
            for _ in range(s.vehicles):
                v = Vehicle(len(self.vehicles), s)
                self.vehicles.append(v)
                vs.append(v)
            self._by_station[s.id] = vs
        self.pending: dict[str, deque[tuple[DispatchRequest, frozenset | None]]] = {
            a: deque() for a in ASSET_TYPES
        }

    def vehicles_at(self, station_id: int) -> list[Vehicle]:
        return self._by_station[station_id]

    def usage(self, psap: int) -> float:
        vs = [v for v in self.vehicles if v.station.psap == psap]
        if not vs:
            return 0.0
        return sum(v.status == DISPATCHED for v in vs) / len(vs)

    def busy_mask(self) -> int:
        m = 0
        for v in self.vehicles:
            if v.status == DISPATCHED:
                m |= 1 << v.id
        return m


def select_vehicle(
    req: DispatchRequest,
    fleet: Fleet,
    travel: TravelModel,
    psaps: frozenset | None = None,
) -> Vehicle | None:
    """Nearest available vehicle of ``req.asset``; ties go to the lowest
    station id, then the lowest vehicle id. ``psaps`` restricts the search to
    stations of those PSAPs (``None`` searches every station)."""
    best = None
    best_key = None
    seen_type = False
    for s in fleet.stations:
        if s.asset != req.asset or (psaps is not None and s.psap not in psaps):
            continue
        seen_type = True
        d = travel.distance(s.x, s.y, req.x, req.y)
        key = (d, s.id)
        if best_key is not None and key >= best_key:
            continue
        for v in fleet.vehicles_at(s.id):
            if v.status == AVAILABLE:
                best, best_key = v, key
                break
    if not seen_type:
        raise ConfigError(f"no {req.asset} station serves PSAPs {sorted(psaps) if psaps else 'any'}")
    return best


def begin_dispatch(
    req: DispatchRequest,
    vehicle: Vehicle,
    now: float,
    travel: TravelModel,
    stream: RngStream,
    onscene_mean_s: float,
) -> tuple[float, float]:
    """Commit ``vehicle`` to ``req``. Returns ``(scene_arrival_time, onscene_duration)``."""
    if vehicle.status != AVAILABLE:
        raise KernelError(f"vehicle {vehicle.id} is not available")
    if vehicle.asset != req.asset:
        raise KernelError(f"vehicle {vehicle.id} is a {vehicle.asset}, request needs {req.asset}")
    vehicle.status = DISPATCHED
    vehicle.request = req.id
    st = vehicle.station
    arrive = now + travel_time((st.x, st.y), (req.x, req.y), travel)
    duration = stream.standard_exponential() * onscene_mean_s
    return arrive, duration


def enqueue_pending(fleet: Fleet, req: DispatchRequest, psaps: frozenset | None = None) -> int:
    q = fleet.pending[req.asset]
    q.append((req, psaps))
    return len(q) - 1


def complete_dispatch(
    fleet: Fleet, vehicle: Vehicle, now: float, travel: TravelModel
) -> list[tuple[DispatchRequest, Vehicle]]:
    """Return ``vehicle`` to service and hand out pending work.

    Pending requests of the freed vehicle's type are examined oldest-first;
    each feasible one gets its nearest available vehicle. The caller then
    runs :func:`begin_dispatch` for every returned pair.
    """
    if vehicle.status != DISPATCHED:
        raise KernelError(f"vehicle {vehicle.id} completed while {vehicle.status}")
    vehicle.status = AVAILABLE
    vehicle.request = None
    q = fleet.pending[vehicle.asset]
    out = []
    if not q:
        return out
    keep = deque()
    while q:
        req, psaps = q.popleft()
        v = select_vehicle(req, fleet, travel, psaps)
        if v is None:
            keep.append((req, psaps))
            continue
        v.status = DISPATCHED  # reserve until the caller runs begin_dispatch
        out.append((req, v))
    fleet.pending[vehicle.asset] = keep
    for _, v in out:
        v.status = AVAILABLE
    return out


def allocate_assets(n_stations: int, mix: dict[str, float]) -> list[str]:
    """Largest-remainder split of ``n_stations`` over asset types.

    Every type with a positive share gets at least one station when there
    are enough stations to go around.
    """
    names = [a for a in ASSET_TYPES if mix.get(a, 0) > 0]
    total = sum(mix[a] for a in names)
    quotas = {a: n_stations * mix[a] / total for a in names}
    counts = {a: int(math.floor(quotas[a])) for a in names}
    left = n_stations - sum(counts.values())
    order = sorted(names, key=lambda a: (-(quotas[a] - counts[a]), ASSET_TYPES.index(a)))
    for a in order[:left]:
        counts[a] += 1
    if n_stations >= len(names):
        for a in names:
            while counts[a] == 0:
                donor = max(names, key=lambda b: counts[b])
                counts[donor] -= 1
                counts[a] += 1
    out = []
    for a in names:
        out += [a] * counts[a]
    return out


def grid_layout(
    subregion,
    n_stations: int,
    asset_mix: dict[str, float],
    vehicles_per_station: int,
    rng: np.random.Generator,
    first_id: int = 0,
    jitter: float = 0.25,
) -> list[Station]:
    """Jittered uniform grid of stations inside one sub-region.

    Cells are chosen in a random order and asset types dealt to them in an
    interleaved order so each type is spread over the area.
    """
    w, h = subregion.width, subregion.height
    cols = max(1, round(math.sqrt(n_stations * w / h)))
    rows = math.ceil(n_stations / cols)
    cw, ch = w / cols, h / rows
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    pick = sorted(rng.choice(len(cells), size=n_stations, replace=False).tolist())
    assets = allocate_assets(n_stations, asset_mix)
    # interleave types: police, fire, ambulance, police, ...
    buckets = {a: [x for x in assets if x == a] for a in ASSET_TYPES}
    dealt = []
    while any(buckets.values()):
        for a in ASSET_TYPES:
            if buckets[a]:
                dealt.append(buckets[a].pop())
    order = rng.permutation(n_stations).tolist()
    stations = []
    for k, idx in enumerate(pick):
        r, c = cells[idx]
        jx, jy = rng.uniform(-jitter, jitter, size=2)
        x = subregion.x0 + (c + 0.5 + jx) * cw
        y = subregion.y0 + (r + 0.5 + jy) * ch
        stations.append(Station(first_id + k, dealt[order[k]], float(x), float(y), vehicles_per_station,
                                subregion.psap))
    return stations


LAYOUT_COLUMNS = ("id", "type", "x", "y", "vehicles", "psap")


def export_layout(stations: list[Station]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(LAYOUT_COLUMNS) + "\n")
    for s in stations:
        buf.write(f"{s.id}\t{s.asset}\t{float(s.x)!r}\t{float(s.y)!r}\t{s.vehicles}\t{s.psap}\n")
    return buf.getvalue()


def import_layout(text: str) -> list[Station]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = tuple(lines[0].split("\t"))
    if header != LAYOUT_COLUMNS:
        raise ConfigError(f"station table header must be {LAYOUT_COLUMNS}, got {header}")
    out = []
    for ln in lines[1:]:
        sid, asset, x, y, nv, psap = ln.split("\t")
        out.append(Station(int(sid), asset, float(x), float(y), int(nv), int(psap)))
    return out
