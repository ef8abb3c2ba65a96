"""Cyber-side queueing elements: server pools, ESInet routing, legacy transfer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable

from .core import ConfigError, EventCalendar, KernelError, RngStream

ACCEPTED = "accepted"
ENQUEUED = "enqueued"
DROPPED = "dropped"


class ServerPool:
    """A ``c``-server FIFO queue with exponential service.

    Completions are scheduled on ``calendar`` as ``(completion_kind,
    (pool, item, token))`` events. ``token`` guards against completions made
    stale by preemption; :meth:`is_current` tells the driver whether a
    popped completion still applies.

    ``rate`` is the per-server completion rate in 1/s. ``rate_schedule``
    optionally overrides it with ``(t_start, rate)`` breakpoints, for
    time-dependent backbone congestion. ``wait_capacity=None`` means an
    unbounded queue; ``0`` makes the pool a loss system.
    """

    def __init__(
        self,
        name: str,
        c: int,
        rate: float,
        wait_capacity: int | None = None,
        calendar: EventCalendar | None = None,
        completion_kind: str = "pool-complete",
        rate_schedule: list[tuple[float, float]] | None = None,
        on_start=None,
    ):
        if c < 1:
            raise ConfigError(f"{name}: server count must be >= 1 (got {c})")
        if not rate > 0:
            raise ConfigError(f"{name}: service rate must be > 0 (got {rate})")
        if wait_capacity is not None and wait_capacity < 0:
            raise ConfigError(f"{name}: wait capacity must be >= 0 or unbounded")
        self.name = name
        self.c = int(c)
        self.rate = float(rate)
        self.rate_schedule = sorted(rate_schedule) if rate_schedule else None
        if self.rate_schedule and any(r <= 0 for _, r in self.rate_schedule):
            raise ConfigError(f"{name}: scheduled service rates must be > 0")
        self.wait_capacity = wait_capacity
        self.calendar = calendar
        self.on_start = on_start
        self.completion_kind = completion_kind
        # threat-controlled knobs; nominal values are 0 and 1.0
        self.disabled = 0
        self.rate_multiplier = 1.0
        self.busy: dict[Hashable, tuple] = {}
        self.queue: deque[tuple] = deque()
        self._token = 0
        self.offered = 0
        self.accepted = 0
        self.dropped = 0
        self.completed = 0
        self.started = 0
        self.wait_sum = 0.0

    def params(self) -> tuple:
        """Configuration snapshot used to verify restoration after threats."""
        return (self.c, self.rate, self.rate_schedule and tuple(self.rate_schedule),
                self.wait_capacity, self.disabled, self.rate_multiplier)

    @property
    def busy_count(self) -> int:
        return len(self.busy)

    @property
    def queue_length(self) -> int:
        return len(self.queue)

    @property
    def active_servers(self) -> int:
        return self.c - self.disabled

    def rate_at(self, t: float) -> float:
        base = self.rate
        if self.rate_schedule:
            for t0, r in self.rate_schedule:
                if t0 <= t:
                    base = r
                else:
                    break
        return base * self.rate_multiplier

    def _start(self, item, now: float, rate: float | None, offered_at: float,
               stream: RngStream, work: float | None) -> float:
        r = (rate * self.rate_multiplier) if rate is not None else self.rate_at(now)
        if work is None:
            work = stream.standard_exponential()
        duration = work / r
        self._token += 1
        self.busy[item] = (self._token, rate, offered_at, work, now, duration)
        self.started += 1
        self.wait_sum += now - offered_at
        if self.on_start is not None:
            self.on_start(item, now)
        if self.calendar is not None:
            self.calendar.schedule(now + duration, self.completion_kind, (self, item, self._token))
        return duration

    def offer(self, item, now: float, stream: RngStream, rate: float | None = None,
              work: float | None = None) -> str:
        """Offer ``item``; returns ``ACCEPTED``, ``ENQUEUED`` or ``DROPPED``.

        ``rate`` overrides the pool rate for this item only (per-modality
        handling times at the call takers). ``work`` is a pre-drawn unit
        exponential; the service time is ``work / rate``. Without it the
        pool draws from ``stream`` when service starts.
        """
        self.offered += 1
        if item in self.busy:
            raise KernelError(f"{self.name}: item {item!r} already in service")
        if len(self.busy) < self.active_servers and not self.queue:
            self.accepted += 1
            self._start(item, now, rate, now, stream, work)
            return ACCEPTED
        if self.wait_capacity is None or len(self.queue) < self.wait_capacity:
            self.accepted += 1
            self.queue.append((item, rate, now, work))
            return ENQUEUED
        self.dropped += 1
        return DROPPED

    def is_current(self, item, token: int) -> bool:
        entry = self.busy.get(item)
        return entry is not None and entry[0] == token

    def release(self, item, now: float, stream: RngStream):
        """Finish ``item``'s service; start the head of the queue if a server is free.

        Returns the item that entered service, or ``None``.
        """
        if not self.busy:
            raise KernelError(f"{self.name}: release on an idle pool")
        if self.busy.pop(item, None) is None:
            raise KernelError(f"{self.name}: {item!r} is not in service")
        self.completed += 1
        return self._fill(now, stream)

    def _fill(self, now: float, stream: RngStream):
        started = None
        while self.queue and len(self.busy) < self.active_servers:
            nxt, rate, t0, work = self.queue.popleft()
            self._start(nxt, now, rate, t0, stream, work)
            started = nxt if started is None else started
        return started

    def abandon(self, item) -> bool:
        """Remove a waiting item (caller hung up). False if it already left the queue."""
        for k, entry in enumerate(self.queue):
            if entry[0] == item:
                del self.queue[k]
                return True
        return False

    def disable(self, k: int, now: float, preempt: bool) -> list:
        """Withhold ``k`` servers. With ``preempt`` the displaced jobs return to
        the head of the queue and later resume with their remaining work."""
        if k > self.c:
            raise ConfigError(f"{self.name}: cannot disable {k} of {self.c} servers")
        self.disabled = k
        displaced = []
        if preempt:
            excess = len(self.busy) - self.active_servers
            if excess > 0:
                # most recently started jobs are displaced first
                victims = sorted(self.busy.items(), key=lambda kv: kv[1][0], reverse=True)[:excess]
                for item, (_, rate, t0, work, start, duration) in victims:
                    del self.busy[item]
                    left = work * max(0.0, 1.0 - (now - start) / duration)
                    self.queue.appendleft((item, rate, t0, left))
                    displaced.append(item)
        return displaced

    def enable(self, now: float, stream: RngStream, disabled: int = 0) -> None:
        """Bring servers back (down to ``disabled`` withheld) and refill them."""
        self.disabled = disabled
        self._fill(now, stream)

    def set_rate_multiplier(self, m: float) -> None:
        if not m > 0:
            raise ConfigError(f"{self.name}: rate multiplier must be > 0")
        self.rate_multiplier = m


def offer_to_pool(pool: ServerPool, item, now: float, stream: RngStream) -> str:
    return pool.offer(item, now, stream)


def release_server(pool: ServerPool, item, now: float, stream: RngStream):
    return pool.release(item, now, stream)


def pool_utilization(pool: ServerPool) -> float:
    return len(pool.busy) / pool.c


@dataclass
class RoutingPolicy:
    """Geographic routing with congestion-threshold rerouting.

    ``threshold=1.0`` disables rerouting because usage never exceeds 1.
    ``unknown_location`` is either a PSAP id or ``"least-utilized"``.
    """

    threshold: float = 1.0
    basis: str = "call-taker"
    unknown_location: int | str = "least-utilized"

    def validate(self, psap_ids, path: str = "esinet.routing") -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"{path}.threshold: must lie in (0, 1]")
        if self.basis not in ("call-taker", "dispatch", "either"):
            raise ConfigError(f"{path}.basis: expected call-taker | dispatch | either")
        u = self.unknown_location
        if u != "least-utilized" and u not in psap_ids:
            raise ConfigError(f"{path}.unknown_location: unknown PSAP id {u!r}")


def _least_utilized(usage: dict[int, float], candidates) -> int:
    return min(candidates, key=lambda p: (usage[p], p))


def route_call(home: int | None, policy: RoutingPolicy, usage: dict[int, float]) -> int:
    """Pick the target PSAP for a call whose location maps to ``home``.

    ``home=None`` marks an indeterminate location. ``usage`` holds each
    PSAP's monitored usage on the policy's basis.
    """
    if home is None:
        rule = policy.unknown_location
        if rule == "least-utilized":
            return _least_utilized(usage, usage)
        return rule
    theta = policy.threshold
    if usage[home] <= theta:
        return home
    eligible = [p for p in usage if usage[p] <= theta]
    if not eligible:
        return home
    return _least_utilized(usage, eligible)


@dataclass
class EsinetNode:
    routers: ServerPool
    psaps: list[int]
    policy: RoutingPolicy = field(default_factory=RoutingPolicy)

    def __post_init__(self):
        if not self.psaps:
            raise ConfigError("esinet: at least one attached PSAP required")


@dataclass
class LegacyGateway:
    """IP-to-telephony transfer element in front of a legacy PSAP."""

    pool: ServerPool


def legacy_transfer(call, gateway: LegacyGateway | None, now: float, stream: RngStream) -> str | None:
    """Start the legacy transfer for ``call``. ``None`` means the PSAP is not
    legacy and the transfer is bypassed."""
    if gateway is None:
        return None
    return gateway.pool.offer(call, now, stream)
