"""Scenario files: parsing, validation, overrides and canonical serialization.

Scenario files are JSON. Every duration, rate, length and speed carries its
unit in the key name, e.g. ``horizon_h``, ``router_rate_per_s``,
``width_mi``, ``speed_mph``. Durations accept ``_s``, ``_min`` or ``_h``;
rates accept ``_per_s``, ``_per_min`` or ``_per_h``. Exactly one variant of
a field may be present, and unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .core import ConfigError, ReplicationPlan
from .dispatch import ASSET_TYPES, Station, TravelModel, grid_layout
from .network import RoutingPolicy
from .psap import PsapConfig
from .threats import ThreatSpec
from .traffic import MODALITIES, ArrivalSpec, ModalityMix, Region, SubRegion

DURATION_UNITS = {"s": 1.0, "min": 60.0, "h": 3600.0}
RATE_UNITS = {"per_s": 1.0, "per_min": 1.0 / 60.0, "per_h": 1.0 / 3600.0}


@dataclass
class EsinetConfig:
    routers: int = 100
    router_rate: float = 50.0
    wait_capacity: int | None = None
    rate_schedule: list[tuple[float, float]] | None = None
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)


@dataclass
class DispatchConfig:
    stations: list[Station]
    station_counts: dict[int, int] | None = None
    layout_seed: int | None = None
    vehicles_per_station: int = 2
    asset_mix: dict[str, float] = field(
        default_factory=lambda: {"police": 0.6, "fire": 0.15, "ambulance": 0.25}
    )
    onscene_min: dict[str, float] = field(
        default_factory=lambda: {"police": 10.0, "fire": 40.0, "ambulance": 20.0}
    )
    travel: TravelModel = field(default_factory=TravelModel)
    pending: bool = True
    cross_dispatch: bool = False
    return_trip_blocks: bool = False


@dataclass
class Scenario:
    name: str
    region: Region
    arrivals: ArrivalSpec
    modality_mix: ModalityMix
    esinet: EsinetConfig
    psaps: list[PsapConfig]
    dispatch: DispatchConfig
    replication: ReplicationPlan
    threats: list[ThreatSpec] = field(default_factory=list)
    unknown_location_fraction: float = 0.0

    @property
    def psap_ids(self) -> list[int]:
        return [p.id for p in self.psaps]

    def pool_names(self) -> list[str]:
        names = ["esinet.routers"]
        for p in self.psaps:
            names += [f"psap{p.id}.gateway", f"psap{p.id}.takers"]
            if p.legacy:
                names.append(f"psap{p.id}.legacy")
        return names

    def topology(self) -> tuple:
        return (tuple(self.psap_ids), tuple(self.pool_names()),
                tuple((s.id, s.asset, s.psap) for s in self.dispatch.stations))

    def psap(self, pid: int) -> PsapConfig:
        for p in self.psaps:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def validate(self) -> None:
        self.replication.__post_init__()
        self.region.validate("region")
        self.arrivals.validate(self.replication.horizon, "arrivals")
        self.modality_mix.validate("modality_mix")
        if not 0.0 <= self.unknown_location_fraction <= 1.0:
            raise ConfigError("unknown_location_fraction: must lie in [0, 1]")
        ids = self.psap_ids
        if len(set(ids)) != len(ids) or not ids:
            raise ConfigError("psaps: ids must be unique and non-empty")
        for k, p in enumerate(self.psaps):
            p.validate(f"psaps[{k}]")
        sub_ids = sorted(s.psap for s in self.region.subregions)
        if sub_ids != sorted(ids):
            raise ConfigError("region.subregions: must map one-to-one onto psaps ids")
        e = self.esinet
        if e.routers < 1:
            raise ConfigError("esinet.routers: must be >= 1")
        if not e.router_rate > 0:
            raise ConfigError("esinet.router_rate: must be > 0")
        if e.wait_capacity is not None and e.wait_capacity < 0:
            raise ConfigError("esinet.wait_capacity: must be >= 0 or null")
        e.routing.validate(ids, "esinet.routing")
        d = self.dispatch
        d.travel.validate("dispatch.travel")
        mix = d.asset_mix
        if set(mix) - set(ASSET_TYPES) or any(v < 0 for v in mix.values()):
            raise ConfigError("dispatch.asset_mix: unknown asset type or negative share")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ConfigError("dispatch.asset_mix: proportions must sum to 1")
        for a in ASSET_TYPES:
            if not d.onscene_min.get(a, 0) > 0:
                raise ConfigError(f"dispatch.onscene.{a}: must be > 0")
        for k, s in enumerate(d.stations):
            if s.psap not in ids:
                raise ConfigError(f"dispatch.stations[{k}].psap: unknown PSAP {s.psap}")
            if not (0 <= s.x <= self.region.width and 0 <= s.y <= self.region.height):
                raise ConfigError(f"dispatch.stations[{k}]: location outside the region")
            if s.vehicles < 1:
                raise ConfigError(f"dispatch.stations[{k}].vehicles: must be >= 1")
        needed = {a for a, v in mix.items() if v > 0}
        for th in self.threats:
            if th.kind == "swatting":
                needed |= {a for a, v in th.asset_mix.items() if v > 0}
        scopes = [None] if d.cross_dispatch else ids
        for pid in scopes:
            have = {s.asset for s in d.stations if pid is None or s.psap == pid}
            missing = needed - have
            if missing:
                where = "the region" if pid is None else f"PSAP {pid}"
                raise ConfigError(f"dispatch.stations: no {sorted(missing)[0]} station in {where}")
        names = self.pool_names()
        seen = set()
        for k, th in enumerate(self.threats):
            if th.id in seen:
                raise ConfigError(f"threats[{k}].id: duplicate threat id {th.id!r}")
            seen.add(th.id)
            th.validate(ids, names, f"threats[{k}]")


class _Obj:
    """Key-tracking view over one JSON object, for strict parsing."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, default: Any = ..., kind: type | tuple | None = None):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"{self._p(key)}: required field missing")
            return default
        self.used.add(key)
        v = self.data[key]
        if kind is not None and v is not None:
            if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
                return float(v)
            if kind is int and not (isinstance(v, int) and not isinstance(v, bool)):
                raise ConfigError(f"{self._p(key)}: expected an integer, got {v!r}")
            if not isinstance(v, kind):
                raise ConfigError(f"{self._p(key)}: expected {getattr(kind, '__name__', kind)}, got {v!r}")
        return v

    def obj(self, key: str, default: Any = ...) -> _Obj | None:
        v = self.get(key, default)
        if v is None:
            return None
        return _Obj(v, self._p(key))

    def _unit_value(self, base: str, units: dict, default, out_unit: str):
        found = [(u, f"{base}_{u}") for u in units if f"{base}_{u}" in self.data]
        if len(found) > 1:
            raise ConfigError(f"{self._p(base)}: give exactly one of {[k for _, k in found]}")
        if not found:
            if default is ...:
                raise ConfigError(
                    f"{self._p(base)}: required field missing (one of "
                    f"{', '.join(f'{base}_{u}' for u in units)})"
                )
            return default
        unit, key = found[0]
        self.used.add(key)
        v = self.data[key]
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._p(key)}: expected a number, got {v!r}")
        if unit == out_unit:
            return float(v)
        return float(v) * units[unit] / units[out_unit]

    def duration(self, base: str, default: Any = ..., unit: str = "s"):
        return self._unit_value(base, DURATION_UNITS, default, unit)

    def rate(self, base: str, default: Any = ..., unit: str = "per_s"):
        return self._unit_value(base, RATE_UNITS, default, unit)

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self._p(extra[0])}: unknown field")


def _int_keys(d: dict, path: str) -> dict[int, Any]:
    out = {}
    for k, v in d.items():
        try:
            out[int(k)] = v
        except ValueError:
            raise ConfigError(f"{path}.{k}: expected an integer PSAP id") from None
    return out


def _mix(o: _Obj, names) -> dict[str, float]:
    out = {n: o.get(n, 0.0, float) for n in names}
    o.finish()
    return out


def _parse_threat(o: _Obj) -> ThreatSpec:
    kind = o.get("kind", kind=str)
    th = ThreatSpec(
        id=o.get("id", kind=str),
        kind=kind,
        start=o.duration("start"),
        duration=o.duration("duration"),
    )
    th.rate = o.rate("rate", 0.0)
    target = o.get("target", "esinet")
    th.target = target
    th.modality = o.get("modality", th.modality, str)
    th.screening_min = o.duration("screening", th.screening_min, unit="min")
    th.mode = o.get("mode", th.mode, str)
    th.servers = o.get("servers", th.servers, int)
    th.rate_multiplier = o.get("rate_multiplier", th.rate_multiplier, float)
    th.preempt = o.get("preempt", th.preempt, bool)
    if o.has("asset_mix"):
        th.asset_mix = _mix(o.obj("asset_mix"), ASSET_TYPES)
    o.finish()
    return th


def parse_scenario(doc: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from a decoded JSON document."""
    root = _Obj(doc, "")
    name = root.get("name", "scenario", str)

    r = root.obj("replication", {})
    plan_kw = dict(
        horizon=r.duration("horizon", 8 * 3600.0),
        n_replications=r.get("replications", 1, int),
        base_seed=r.get("base_seed", 20240611, int),
        warmup=r.duration("warmup", 0.0),
    )
    r.finish()
    try:
        plan = ReplicationPlan(**plan_kw)
    except ConfigError as exc:
        raise ConfigError(str(exc)) from None

    g = root.obj("region")
    subs = []
    for k, s in enumerate(g.get("subregions", kind=list)):
        so = _Obj(s, f"region.subregions[{k}]")
        subs.append(SubRegion(so.get("x0_mi", kind=float), so.get("y0_mi", kind=float),
                              so.get("x1_mi", kind=float), so.get("y1_mi", kind=float),
                              so.get("psap", kind=int)))
        so.finish()
    region = Region(g.get("width_mi", kind=float), g.get("height_mi", kind=float), subs)
    g.finish()

    a = root.obj("arrivals", {})
    arrivals = ArrivalSpec(kind=a.get("kind", "homogeneous", str))
    arrivals.rate = a.rate("rate", 36.0, unit="per_h")
    arrivals.batch_mean = a.get("batch_mean", arrivals.batch_mean, float)
    arrivals.density_scale = a.get("density_scale", 1.0, float)
    pieces = []
    for k, pc in enumerate(a.get("pieces", [], list)):
        po = _Obj(pc, f"arrivals.pieces[{k}]")
        pieces.append((po.duration("start"), po.duration("end"), po.rate("rate", unit="per_h")))
        po.finish()
    arrivals.pieces = pieces
    a.finish()

    mm = root.obj("modality_mix", {})
    mix = ModalityMix(**{m: mm.get(m, getattr(ModalityMix(), m), float) for m in MODALITIES})
    mm.finish()

    unknown_frac = root.get("unknown_location_fraction", 0.0, float)

    e = root.obj("esinet", {})
    es = EsinetConfig()
    es.routers = e.get("routers", es.routers, int)
    es.router_rate = e.rate("router_rate", es.router_rate)
    es.wait_capacity = e.get("wait_capacity", None, int)
    sched = e.get("rate_schedule", None, list)
    if sched is not None:
        es.rate_schedule = []
        for k, pc in enumerate(sched):
            po = _Obj(pc, f"esinet.rate_schedule[{k}]")
            es.rate_schedule.append((po.duration("from"), po.rate("rate")))
            po.finish()
    ro = e.obj("routing", {})
    es.routing = RoutingPolicy(
        threshold=ro.get("threshold", 1.0, float),
        basis=ro.get("basis", "call-taker", str),
        unknown_location=ro.get("unknown_location", "least-utilized"),
    )
    ro.finish()
    e.finish()

    psaps = []
    for k, p in enumerate(root.get("psaps", kind=list)):
        po = _Obj(p, f"psaps[{k}]")
        cfg = PsapConfig(id=po.get("id", kind=int))
        cfg.gateway_slots = po.get("gateway_slots", cfg.gateway_slots, int)
        cfg.slot_rate = po.rate("slot_rate", cfg.slot_rate)
        cfg.gateway_capacity = po.get("gateway_capacity", cfg.gateway_capacity, int)
        cfg.call_takers = po.get("call_takers", cfg.call_takers, int)
        if po.has("handling"):
            ho = po.obj("handling")
            cfg.handling_min = {m: ho.duration(m, unit="min") for m in MODALITIES}
            ho.finish()
        cfg.dispatch_prob = po.get("dispatch_prob", cfg.dispatch_prob, float)
        cfg.patience_min = po.duration("patience", None, unit="min")
        cfg.legacy = po.get("legacy", False, bool)
        cfg.legacy_rate = po.rate("legacy_rate", cfg.legacy_rate)
        cfg.legacy_servers = po.get("legacy_servers", cfg.legacy_servers, int)
        cfg.legacy_capacity = po.get("legacy_capacity", None, int)
        po.finish()
        psaps.append(cfg)

    d = root.obj("dispatch")
    dc = DispatchConfig(stations=[])
    if d.has("asset_mix"):
        dc.asset_mix = _mix(d.obj("asset_mix"), ASSET_TYPES)
    if d.has("onscene"):
        oo = d.obj("onscene")
        dc.onscene_min = {t: oo.duration(t, unit="min") for t in ASSET_TYPES}
        oo.finish()
    if d.has("travel"):
        to = d.obj("travel")
        dc.travel = TravelModel(to.get("metric", "manhattan", str), to.get("speed_mph", 30.0, float))
        to.finish()
    dc.pending = d.get("pending", True, bool)
    dc.cross_dispatch = d.get("cross_dispatch", False, bool)
    dc.return_trip_blocks = d.get("return_trip_blocks", False, bool)
    lo = d.obj("layout")
    if lo.has("stations") == lo.has("counts"):
        raise ConfigError("dispatch.layout: give exactly one of 'stations' or 'counts'")
    dc.vehicles_per_station = lo.get("vehicles_per_station", 2, int)
    if lo.has("stations"):
        for k, s in enumerate(lo.get("stations", kind=list)):
            so = _Obj(s, f"dispatch.layout.stations[{k}]")
            dc.stations.append(Station(
                so.get("id", kind=int), so.get("type", kind=str), so.get("x_mi", kind=float),
                so.get("y_mi", kind=float), so.get("vehicles", dc.vehicles_per_station, int),
                so.get("psap", kind=int),
            ))
            so.finish()
    else:
        dc.station_counts = _int_keys(lo.get("counts", kind=dict), "dispatch.layout.counts")
        dc.layout_seed = lo.get("seed", 0, int)
    lo.finish()
    d.finish()

    threats = []
    for k, t in enumerate(root.get("threats", [], list)):
        threats.append(_parse_threat(_Obj(t, f"threats[{k}]")))
    root.finish()

    sc = Scenario(name, region, arrivals, mix, es, psaps, dc, plan, threats, unknown_frac)
    if dc.station_counts is not None:
        region.validate("region")
        dc.stations = generate_stations(sc)
    sc.validate()
    return sc


def generate_stations(sc: Scenario) -> list[Station]:
    """Seeded jittered-grid station layout per sub-region."""
    dc = sc.dispatch
    rng = np.random.default_rng(dc.layout_seed)
    stations: list[Station] = []
    for pid in sorted(dc.station_counts):
        n = dc.station_counts[pid]
        if n < 1:
            raise ConfigError(f"dispatch.layout.counts.{pid}: must be >= 1")
        try:
            sub = sc.region.subregion_of(pid)
        except ConfigError:
            raise ConfigError(f"dispatch.layout.counts.{pid}: no sub-region for this PSAP") from None
        stations += grid_layout(sub, n, dc.asset_mix, dc.vehicles_per_station, rng, len(stations))
    return stations


def scenario_to_doc(sc: Scenario) -> dict:
    """Canonical JSON document; ``parse_scenario`` of it reproduces ``sc``."""
    doc: dict[str, Any] = {
        "name": sc.name,
        "replication": {
            "horizon_s": sc.replication.horizon,
            "replications": sc.replication.n_replications,
            "base_seed": sc.replication.base_seed,
            "warmup_s": sc.replication.warmup,
        },
        "region": {
            "width_mi": sc.region.width,
            "height_mi": sc.region.height,
            "subregions": [
                {"psap": s.psap, "x0_mi": s.x0, "y0_mi": s.y0, "x1_mi": s.x1, "y1_mi": s.y1}
                for s in sc.region.subregions
            ],
        },
        "arrivals": {
            "kind": sc.arrivals.kind,
            "rate_per_h": sc.arrivals.rate,
            "batch_mean": sc.arrivals.batch_mean,
            "density_scale": sc.arrivals.density_scale,
            "pieces": [{"start_s": a, "end_s": b, "rate_per_h": r} for a, b, r in sc.arrivals.pieces],
        },
        "modality_mix": {m: v for m, v in zip(MODALITIES, sc.modality_mix.as_tuple())},
        "unknown_location_fraction": sc.unknown_location_fraction,
        "esinet": {
            "routers": sc.esinet.routers,
            "router_rate_per_s": sc.esinet.router_rate,
            "wait_capacity": sc.esinet.wait_capacity,
            "rate_schedule": None if sc.esinet.rate_schedule is None else [
                {"from_s": t, "rate_per_s": r} for t, r in sc.esinet.rate_schedule
            ],
            "routing": {
                "threshold": sc.esinet.routing.threshold,
                "basis": sc.esinet.routing.basis,
                "unknown_location": sc.esinet.routing.unknown_location,
            },
        },
        "psaps": [
            {
                "id": p.id,
                "gateway_slots": p.gateway_slots,
                "slot_rate_per_s": p.slot_rate,
                "gateway_capacity": p.gateway_capacity,
                "call_takers": p.call_takers,
                "handling": {f"{m}_min": p.handling_min[m] for m in MODALITIES},
                "dispatch_prob": p.dispatch_prob,
                "patience_min": p.patience_min,
                "legacy": p.legacy,
                "legacy_rate_per_s": p.legacy_rate,
                "legacy_servers": p.legacy_servers,
                "legacy_capacity": p.legacy_capacity,
            }
            for p in sc.psaps
        ],
        "dispatch": {
            "asset_mix": dict(sc.dispatch.asset_mix),
            "onscene": {f"{a}_min": sc.dispatch.onscene_min[a] for a in ASSET_TYPES},
            "travel": {"metric": sc.dispatch.travel.metric,
                       "speed_mph": sc.dispatch.travel.speed_mph},
            "pending": sc.dispatch.pending,
            "cross_dispatch": sc.dispatch.cross_dispatch,
            "return_trip_blocks": sc.dispatch.return_trip_blocks,
            "layout": _layout_doc(sc.dispatch),
        },
        "threats": [_threat_doc(t) for t in sc.threats],
    }
    return doc


def _layout_doc(dc: DispatchConfig) -> dict:
    if dc.station_counts is not None:
        return {"counts": {str(k): v for k, v in dc.station_counts.items()},
                "seed": dc.layout_seed, "vehicles_per_station": dc.vehicles_per_station}
    return {
        "vehicles_per_station": dc.vehicles_per_station,
        "stations": [{"id": s.id, "type": s.asset, "x_mi": s.x, "y_mi": s.y,
                      "vehicles": s.vehicles, "psap": s.psap} for s in dc.stations],
    }


def _threat_doc(t: ThreatSpec) -> dict:
    return {
        "id": t.id, "kind": t.kind, "start_s": t.start, "duration_s": t.duration,
        "rate_per_s": t.rate, "target": t.target, "modality": t.modality,
        "screening_min": t.screening_min, "mode": t.mode, "servers": t.servers,
        "rate_multiplier": t.rate_multiplier, "preempt": t.preempt,
        "asset_mix": dict(t.asset_mix),
    }


def read_json(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read scenario file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return doc


# convenience override names for the calibrated parameters
_ALIASES = {
    "p_d": lambda doc, v: [p.__setitem__("dispatch_prob", v) for p in doc["psaps"]],
    "speed": lambda doc, v: doc["dispatch"].setdefault("travel", {}).__setitem__("speed_mph", v),
    "theta": lambda doc, v: doc.setdefault("esinet", {}).setdefault("routing", {}).__setitem__("threshold", v),
    "flood_rate": lambda doc, v: [_set_rate(t, v) for t in doc.get("threats", []) if t.get("kind") == "ddos"],
    "patience_min": lambda doc, v: [_set_patience(p, v) for p in doc["psaps"]],
}


def _set_rate(t: dict, v) -> None:
    for u in RATE_UNITS:
        t.pop(f"rate_{u}", None)
    t["rate_per_s"] = v


def _set_patience(p: dict, v) -> None:
    for u in DURATION_UNITS:
        p.pop(f"patience_{u}", None)
    p["patience_min"] = v


def apply_overrides(doc: dict, sets: list[str]) -> dict:
    """Apply ``field=value`` overrides to a raw document.

    ``field`` is a dotted path (list indices as integers) or one of the
    aliases ``p_d``, ``speed``, ``theta``, ``flood_rate``, ``patience_min``.
    ``value`` is parsed as JSON, falling back to a plain string.
    """
    doc = copy.deepcopy(doc)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected field=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if key in _ALIASES:
            _ALIASES[key](doc, value)
            continue
        parts = key.split(".")
        node: Any = doc
        for k, part in enumerate(parts[:-1]):
            try:
                node = node[int(part)] if isinstance(node, list) else node.setdefault(part, {})
            except (IndexError, ValueError, AttributeError):
                raise ConfigError(f"--set {key}: no such path at {'.'.join(parts[:k + 1])}") from None
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return doc


def add_threat_overlay(doc: dict, overlay: dict) -> dict:
    extra = set(overlay) - {"threats"}
    if extra:
        raise ConfigError(f"threat overlay: unknown field {sorted(extra)[0]!r}")
    doc = copy.deepcopy(doc)
    doc.setdefault("threats", [])
    doc["threats"] = list(doc["threats"]) + list(overlay.get("threats", []))
    return doc


def load_scenario(path: str | Path, sets: list[str] = (), threat_paths: list[str] = ()) -> Scenario:
    doc = read_json(path)
    for tp in threat_paths:
        doc = add_threat_overlay(doc, read_json(tp))
    if sets:
        doc = apply_overrides(doc, list(sets))
    return parse_scenario(doc)


def bundled_path(name: str) -> Path:
    """Path of a scenario or threat file shipped with the package."""
    ref = resources.files("ng911sim") / "data" / name
    return Path(str(ref))


def charlotte(**overrides) -> Scenario:
    """The bundled three-PSAP Charlotte scenario."""
    doc = read_json(bundled_path("charlotte.json"))
    if overrides:
        doc = apply_overrides(doc, [f"{k}={json.dumps(v)}" for k, v in overrides.items()])
    return parse_scenario(doc)
