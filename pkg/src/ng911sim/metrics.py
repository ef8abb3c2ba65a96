"""Per-call lifecycle records and the statistics reported over them."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np

from .core import KernelError

SERVED = "served-with-dispatch"
HANDLED = "handled-no-dispatch"
DROPPED = "dropped"
ABANDONED = "abandoned"
IN_FLIGHT = "in-flight-at-horizon"
OUTCOMES = (SERVED, HANDLED, DROPPED, ABANDONED, IN_FLIGHT)

# pipeline order; each stamp is None until the call reaches that stage
STAMPS = (
    "arrival",
    "esinet_entry",
    "esinet_exit",
    "legacy_entry",
    "legacy_exit",
    "gateway_entry",
    "gateway_exit",
    "taker_start",
    "taker_end",
    "dispatch_created",
    "scene_arrival",
    "dispatch_complete",
)


@dataclass(slots=True, eq=False)
class CallRecord:
    """Lifecycle of one call. Records hash by identity; compare them through
    :func:`records_to_tsv`."""

    id: int
    arrival: float
    provenance: str = "normal"
    kind: str = "call"
    threat: str | None = None
    modality: str | None = None
    x: float | None = None
    y: float | None = None
    home_psap: int | None = None
    psap: int | None = None
    rerouted: bool = False
    esinet_entry: float | None = None
    esinet_exit: float | None = None
    legacy_entry: float | None = None
    legacy_exit: float | None = None
    gateway_entry: float | None = None
    gateway_exit: float | None = None
    taker_start: float | None = None
    taker_end: float | None = None
    dispatch_created: float | None = None
    scene_arrival: float | None = None
    dispatch_complete: float | None = None
    asset: str | None = None
    vehicle: int | None = None
    outcome: str | None = None
    drop_element: str | None = None

    def set_outcome(self, outcome: str, element: str | None = None) -> None:
        if self.outcome is not None:
            raise KernelError(f"call {self.id}: outcome already {self.outcome!r}")
        self.outcome = outcome
        self.drop_element = element

    def stamps_monotone(self) -> bool:
        last = -math.inf
        for name in STAMPS:
            t = getattr(self, name)
            if t is None:
                continue
            if t < last:
                return False
            last = t
        return True


RECORD_COLUMNS = tuple(f.name for f in fields(CallRecord))


def call_processing_time(rec: CallRecord) -> float | None:
    """Minutes from arrival to the end of call-taker service."""
    if rec.taker_end is None:
        return None
    return (rec.taker_end - rec.arrival) / 60.0


def total_service_time(rec: CallRecord) -> float | None:
    """Minutes from arrival until the dispatched unit reaches the scene."""
    if rec.outcome != SERVED or rec.scene_arrival is None:
        return None
    return (rec.scene_arrival - rec.arrival) / 60.0


def in_scope(rec: CallRecord, scope) -> bool:
    return scope == "region" or rec.psap == scope


def drop_rate(records, scope="region") -> float | None:
    """Dropped plus abandoned normal calls over all normal calls in scope."""
    n = bad = 0
    for r in records:
        if r.provenance != "normal" or not in_scope(r, scope):
            continue
        n += 1
        if r.outcome in (DROPPED, ABANDONED):
            bad += 1
    if n == 0:
        return None
    return bad / n


@dataclass
class Summary:
    n: int
    mean: float | None
    std: float | None
    within: dict[float, float | None]


def summary_stats(values, thresholds=()) -> Summary:
    """Sample mean, n-1 standard deviation and empirical CDF at ``thresholds``."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    n = len(v)
    if n == 0:
        return Summary(0, None, None, {t: None for t in thresholds})
    std = float(v.std(ddof=1)) if n > 1 else 0.0
    return Summary(n, float(v.mean()), std, {t: float(np.mean(v <= t)) for t in thresholds})


def pearson_correlation(xs, ys) -> float | None:
    """Sample Pearson r over pairs where both values are defined."""
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    if len(pairs) < 2:
        return None
    a = np.array(pairs, dtype=float)
    dx = a[:, 0] - a[:, 0].mean()
    dy = a[:, 1] - a[:, 1].mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class Histogram:
    lo: float
    hi: float
    width: float
    counts: list[int]
    underflow: int
    overflow: int

    @property
    def edges(self) -> list[float]:
        return [self.lo + k * self.width for k in range(len(self.counts) + 1)]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_lo\tbin_hi\tcount\n")
        buf.write(f"-inf\t{self.lo:g}\t{self.underflow}\n")
        for k, c in enumerate(self.counts):
            a = self.lo + k * self.width
            buf.write(f"{a:g}\t{min(a + self.width, self.hi):g}\t{c}\n")
        buf.write(f"{self.hi:g}\tinf\t{self.overflow}\n")
        return buf.getvalue()


def histogram(values, width: float, lo: float, hi: float) -> Histogram:
    """Fixed-width bins over ``[lo, hi)``; the top edge ``hi`` is closed so a
    value equal to ``hi`` lands in the last bin."""
    if not width > 0:
        raise ValueError("bin width must be > 0")
    nbins = max(1, math.ceil((hi - lo) / width - 1e-12))
    counts = [0] * nbins
    under = over = 0
    for v in values:
        if v is None:
            continue
        if v < lo:
            under += 1
        elif v > hi:
            over += 1
        else:
            k = min(int((v - lo) // width), nbins - 1)
            counts[k] += 1
    return Histogram(lo, hi, width, counts, under, over)


def outcome_counts(records, scope="region", provenance="normal") -> dict[str, int]:
    out = {o: 0 for o in OUTCOMES}
    for r in records:
        if r.provenance == provenance and in_scope(r, scope):
            out[r.outcome] += 1
    return out


def drops_by_element(records, scope="region", provenance="normal") -> dict[str, int]:
    out: dict[str, int] = {}
    for r in records:
        if r.provenance == provenance and in_scope(r, scope) and r.outcome in (DROPPED, ABANDONED):
            key = r.drop_element or r.outcome
            out[key] = out.get(key, 0) + 1
    return out


def _fmt(v):
    return "" if v is None else (repr(v) if isinstance(v, float) else str(v))


def records_to_tsv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])
    return buf.getvalue()


def scope_report(records, scope="region", thresholds_proc=(2.0,), thresholds_serv=(8.0,)) -> dict:
    normal = [r for r in records if r.provenance == "normal" and in_scope(r, scope)]
    proc = [call_processing_time(r) for r in normal]
    serv = [total_service_time(r) for r in normal]
    sp = summary_stats(proc, thresholds_proc)
    ss = summary_stats(serv, thresholds_serv)
    counts = outcome_counts(records, scope)
    return {
        "calls": len(normal),
        "outcomes": counts,
        "processed": sum(p is not None for p in proc),
        "drop_rate": drop_rate(records, scope),
        "drops_by_element": drops_by_element(records, scope),
        "processing_min": {"n": sp.n, "mean": sp.mean, "std": sp.std,
                           "within": {f"{k:g}": v for k, v in sp.within.items()}},
        "service_min": {"n": ss.n, "mean": ss.mean, "std": ss.std,
                        "within": {f"{k:g}": v for k, v in ss.within.items()}},
        "pearson_processing_service": pearson_correlation(proc, serv),
    }


def attack_traffic(records) -> dict:
    fake = [r for r in records if r.provenance == "fake"]
    by_kind: dict[str, dict[str, int]] = {}
    for r in fake:
        d = by_kind.setdefault(r.kind, {o: 0 for o in OUTCOMES})
        d[r.outcome] += 1
    return {"jobs": len(fake), "by_kind": by_kind}
