"""Threat injection: fake traffic floods, service failures, false dispatch demand."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, EventCalendar, RngStream
from .dispatch import ASSET_TYPES
from .metrics import (
    ABANDONED,
    DROPPED,
    call_processing_time,
    in_scope,
    total_service_time,
)
from .network import ServerPool
from .traffic import MODALITIES

THREAT_KINDS = ("ddos", "tdos", "malware", "swatting")


@dataclass
class ThreatSpec:
    """A timed perturbation. ``rate`` is fake jobs per second.

    ``target`` is ``"esinet"`` or a list of PSAP ids for floods, and a pool
    name (``esinet.routers``, ``psap2.takers``, ...) for malware.
    """

    id: str
    kind: str
    start: float
    duration: float
    rate: float = 0.0
    target: str | list[int] = "esinet"
    modality: str = "voip"
    screening_min: float = 1.0
    mode: str = "disable"
    servers: int = 0
    rate_multiplier: float = 0.5
    preempt: bool = True
    asset_mix: dict[str, float] = field(
        default_factory=lambda: {"police": 0.6, "fire": 0.15, "ambulance": 0.25}
    )

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, t: float) -> bool:
        return self.start <= t < self.end

    def validate(self, psap_ids, pool_names, path: str = "threats") -> None:
        if self.kind not in THREAT_KINDS:
            raise ConfigError(f"{path}.kind: unknown threat kind {self.kind!r}")
        if self.start < 0:
            raise ConfigError(f"{path}.start: must be >= 0")
        if not self.duration > 0:
            raise ConfigError(f"{path}.duration: must be > 0")
        if self.rate < 0:
            raise ConfigError(f"{path}.rate: must be >= 0")
        if self.kind == "malware":
            if self.target not in pool_names:
                raise ConfigError(f"{path}.target: unknown pool {self.target!r}")
            if self.mode not in ("disable", "slow"):
                raise ConfigError(f"{path}.mode: expected disable | slow")
            if self.mode == "slow" and not 0.0 < self.rate_multiplier < 1.0:
                raise ConfigError(f"{path}.rate_multiplier: must lie in (0, 1)")
            if self.mode == "disable" and self.servers < 1:
                raise ConfigError(f"{path}.servers: must be >= 1")
            return
        if self.target != "esinet":
            if not isinstance(self.target, list) or not self.target:
                raise ConfigError(f"{path}.target: expected 'esinet' or a list of PSAP ids")
            for p in self.target:
                if p not in psap_ids:
                    raise ConfigError(f"{path}.target: unknown PSAP id {p!r}")
        if self.kind == "tdos" and self.modality not in MODALITIES:
            raise ConfigError(f"{path}.modality: unknown modality {self.modality!r}")
        if self.kind == "ddos" and not self.screening_min > 0:
            raise ConfigError(f"{path}.screening_min: must be > 0")
        if self.kind == "swatting":
            if set(self.asset_mix) - set(ASSET_TYPES):
                raise ConfigError(f"{path}.asset_mix: unknown asset type")
            if abs(sum(self.asset_mix.values()) - 1.0) > 1e-9:
                raise ConfigError(f"{path}.asset_mix: proportions must sum to 1")


def compile_threat_timeline(threats: list[ThreatSpec], calendar: EventCalendar) -> list:
    """One threat-start and one threat-end event per threat."""
    evs = []
    for k, th in enumerate(threats):
        evs.append(calendar.schedule(th.start, "threat-start", k))
        evs.append(calendar.schedule(th.end, "threat-end", k))
    return evs


def fake_arrival_stream(threat: ThreatSpec, now: float, stream: RngStream) -> float | None:
    """Time of the next fake job after ``now``, or ``None`` once the threat has ended."""
    if threat.rate <= 0:
        return None
    t = now + stream.exponential(threat.rate)
    return t if t < threat.end else None


def apply_service_failure(
    threat: ThreatSpec,
    pool: ServerPool,
    phase: str,
    now: float,
    stream: RngStream,
    saved: dict,
) -> list:
    """Start or end a malware outage on ``pool``.

    ``saved`` keeps the pre-attack knob values per threat id so the end phase
    restores them exactly. Returns the jobs displaced by preemption.
    """
    if phase == "start":
        saved[threat.id] = (pool.disabled, pool.rate_multiplier)
        if threat.mode == "disable":
            if threat.servers > pool.c:
                raise ConfigError(
                    f"threat {threat.id}: cannot disable {threat.servers} of {pool.c} servers"
                )
            return pool.disable(threat.servers, now, threat.preempt)
        pool.set_rate_multiplier(pool.rate_multiplier * threat.rate_multiplier)
        return []
    if phase == "end":
        disabled, mult = saved.pop(threat.id)
        pool.rate_multiplier = mult
        pool.enable(now, stream, disabled)
        return []
    raise ValueError(f"unknown phase {phase!r}")


class ComparisonError(ValueError):
    """Baseline and attacked runs are not comparable."""


def figure_columns(reps, scope="region") -> dict:
    """Per-replication means of the impact quantities over normal calls."""
    processed, dropped, rates, proc_means = [], [], [], []
    for recs in reps:
        normal = [r for r in recs if r.provenance == "normal" and in_scope(r, scope)]
        p = [call_processing_time(r) for r in normal]
        p = [x for x in p if x is not None]
        d = sum(r.outcome in (DROPPED, ABANDONED) for r in normal)
        processed.append(len(p))
        dropped.append(d)
        rates.append(d / len(normal) if normal else 0.0)
        proc_means.append(float(np.mean(p)) if p else float("nan"))
    # pooled means weight every call equally across replications
    allp = [call_processing_time(r) for recs in reps for r in recs
            if r.provenance == "normal" and in_scope(r, scope)]
    alls = [total_service_time(r) for recs in reps for r in recs
            if r.provenance == "normal" and in_scope(r, scope)]
    allp = [x for x in allp if x is not None]
    alls = [x for x in alls if x is not None]
    return {
        "processed": float(np.mean(processed)),
        "dropped": float(np.mean(dropped)),
        "drop_rate": float(np.mean(rates)),
        "processing_min": float(np.mean(allp)) if allp else None,
        "service_min": float(np.mean(alls)) if alls else None,
        "per_rep_dropped": dropped,
        "per_rep_processing_min": proc_means,
    }


def attack_impact_report(baseline, attacked) -> dict:
    """Differences attacked minus baseline for the region and every PSAP.

    Both arguments are :class:`~ng911sim.simulator.BatchResult`-like objects
    with ``topology`` and ``replications`` (lists of call records).
    """
    if baseline.topology != attacked.topology:
        raise ComparisonError("baseline and attacked runs use different topologies")
    if len(baseline.replications) != len(attacked.replications):
        raise ComparisonError("baseline and attacked runs have different replication counts")
    scopes = ["region"] + list(baseline.topology[0])
    out = {}
    for sc in scopes:
        b = figure_columns(baseline.replications, sc)
        a = figure_columns(attacked.replications, sc)
        delta = {}
        for k in ("processed", "dropped", "drop_rate", "processing_min", "service_min"):
            if a[k] is None or b[k] is None:
                delta[k] = None
            else:
                delta[k] = a[k] - b[k]
        key = "region" if sc == "region" else f"psap{sc}"
        out[key] = {
            "baseline": {k: b[k] for k in delta},
            "attacked": {k: a[k] for k in delta},
            "delta": delta,
        }
    return out
