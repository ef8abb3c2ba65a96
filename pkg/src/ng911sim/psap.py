"""PSAP internals: gateway slots, call takers, dispatch initiation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import ConfigError, EventCalendar, RngStream
from .dispatch import ASSET_TYPES, DispatchRequest
from .metrics import CallRecord
from .network import DROPPED, LegacyGateway, ServerPool
from .traffic import MODALITIES


def _default_handling() -> dict[str, float]:
    return {"voice": 2.0, "text": 1.0, "voip": 2.0, "image_video": 1.5}


@dataclass
class PsapConfig:
    """One PSAP. Handling means and patience are in minutes; rates per second."""

    id: int
    gateway_slots: int = 50
    slot_rate: float = 100.0
    gateway_capacity: int | None = 0
    call_takers: int = 3
    handling_min: dict[str, float] = field(default_factory=_default_handling)
    dispatch_prob: float = 0.9
    patience_min: float | None = None
    legacy: bool = False
    legacy_rate: float = 2.0
    legacy_servers: int = 1
    legacy_capacity: int | None = None

    def validate(self, path: str) -> None:
        if self.gateway_slots < 1:
            raise ConfigError(f"{path}.gateway_slots: must be >= 1")
        if not self.slot_rate > 0:
            raise ConfigError(f"{path}.slot_rate: must be > 0")
        if self.call_takers < 1:
            raise ConfigError(f"{path}.call_takers: must be >= 1")
        for m in MODALITIES:
            if m not in self.handling_min:
                raise ConfigError(f"{path}.handling_min.{m}: missing")
            if not self.handling_min[m] > 0:
                raise ConfigError(f"{path}.handling_min.{m}: must be > 0")
        extra = set(self.handling_min) - set(MODALITIES)
        if extra:
            raise ConfigError(f"{path}.handling_min: unknown modality {sorted(extra)[0]!r}")
        if not 0.0 <= self.dispatch_prob <= 1.0:
            raise ConfigError(f"{path}.dispatch_prob: must lie in [0, 1]")
        if self.patience_min is not None and not self.patience_min > 0:
            raise ConfigError(f"{path}.patience_min: must be > 0 or null")
        for name in ("gateway_capacity", "legacy_capacity"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{path}.{name}: must be >= 0 or null")
        if self.legacy and not self.legacy_rate > 0:
            raise ConfigError(f"{path}.legacy_rate: must be > 0")
        if self.legacy_servers < 1:
            raise ConfigError(f"{path}.legacy_servers: must be >= 1")


class PsapState:
    """Live queues and counters of one PSAP within a replication."""

    def __init__(self, cfg: PsapConfig, calendar: EventCalendar | None = None, on_taker_start=None):
        self.cfg = cfg
        self.id = cfg.id
        self.gateway = ServerPool(
            f"psap{cfg.id}.gateway", cfg.gateway_slots, cfg.slot_rate, cfg.gateway_capacity,
            calendar, "gateway-complete",
        )
        self.takers = ServerPool(
            f"psap{cfg.id}.takers", cfg.call_takers, 1.0 / (60.0 * cfg.handling_min["voice"]),
            None, calendar, "taker-complete", on_start=on_taker_start,
        )
        self.legacy = None
        if cfg.legacy:
            self.legacy = LegacyGateway(ServerPool(
                f"psap{cfg.id}.legacy", cfg.legacy_servers, cfg.legacy_rate, cfg.legacy_capacity,
                calendar, "legacy-complete",
            ))
        self.handling_rate = {m: 1.0 / (60.0 * v) for m, v in cfg.handling_min.items()}
        self.accepted = 0
        self.dropped = 0
        self.handled = 0
        self.dispatch_requests = 0

    def pools(self) -> list[ServerPool]:
        out = [self.gateway, self.takers]
        if self.legacy is not None:
            out.append(self.legacy.pool)
        return out


def gateway_accept(
    call: CallRecord, psap: PsapState, now: float, stream: RngStream, work: float | None = None
) -> str:
    call.gateway_entry = now
    res = psap.gateway.offer(call, now, stream, work=work)
    if res == DROPPED:
        psap.dropped += 1
    else:
        psap.accepted += 1
    return res


def assign_call_taker(
    call: CallRecord,
    psap: PsapState,
    now: float,
    stream: RngStream,
    rate: float | None = None,
    work: float | None = None,
) -> str:
    """Queue ``call`` for a call taker; handling time follows its modality
    unless ``rate`` (1/s) is given."""
    if rate is None:
        rate = psap.handling_rate[call.modality]
    return psap.takers.offer(call, now, stream, rate=rate, work=work)


def complete_call_handling(
    call: CallRecord,
    psap: PsapState,
    now: float,
    service_stream: RngStream,
    dispatch_stream: RngStream,
    asset_cdf: list[float],
    request_id: int,
    force_dispatch: bool = False,
    flagged_false: bool = False,
) -> DispatchRequest | None:
    """Release the call taker and decide whether the call needs a vehicle.

    ``dispatch_stream`` supplies the dispatch coin and the asset-type draw;
    ``service_stream`` the handling time of whichever call takes over the
    freed call taker.
    """
    call.taker_end = now
    psap.takers.release(call, now, service_stream)
    psap.handled += 1
    if force_dispatch or dispatch_stream.uniform() < psap.cfg.dispatch_prob:
        u = dispatch_stream.uniform()
        k = next((i for i, e in enumerate(asset_cdf) if u < e), len(asset_cdf) - 1)
        psap.dispatch_requests += 1
        return DispatchRequest(request_id, call.x, call.y, ASSET_TYPES[k], now,
                               call.home_psap, flagged_false, call)
    return None
