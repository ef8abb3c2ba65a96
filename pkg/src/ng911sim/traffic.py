"""Call generation: Poisson arrival epochs, modality mix, uniform origins."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import accumulate

from .core import ConfigError, RngStream

MODALITIES = ("voice", "text", "voip", "image_video")


@dataclass
class ArrivalSpec:
    """Arrival process. Rates are calls per hour.

    ``pieces`` holds ``(start_s, end_s, rate_per_hour)`` tuples for the
    piecewise kind. ``batch_mean`` is the mean of the geometric batch size
    for the batch kind.
    """

    kind: str = "homogeneous"
    rate: float = 36.0
    pieces: list[tuple[float, float, float]] = field(default_factory=list)
    batch_mean: float = 2.0
    density_scale: float = 1.0

    def validate(self, horizon: float | None = None, path: str = "arrivals") -> None:
        if self.kind not in ("homogeneous", "piecewise", "batch"):
            raise ConfigError(f"{path}.kind: unknown arrival kind {self.kind!r}")
        if not self.density_scale > 0:
            raise ConfigError(f"{path}.density_scale: must be > 0")
        if self.rate < 0:
            raise ConfigError(f"{path}.rate: must be >= 0")
        if self.kind == "batch" and self.batch_mean < 1:
            raise ConfigError(f"{path}.batch_mean: must be >= 1")
        if self.kind == "piecewise":
            if not self.pieces:
                raise ConfigError(f"{path}.pieces: piecewise kind needs at least one interval")
            prev_end = 0.0
            for i, (a, b, r) in enumerate(self.pieces):
                if a != prev_end or b <= a:
                    raise ConfigError(f"{path}.pieces[{i}]: intervals must be contiguous from 0")
                if r < 0:
                    raise ConfigError(f"{path}.pieces[{i}]: rate must be >= 0")
                prev_end = b
            if horizon is not None and prev_end < horizon:
                raise ConfigError(f"{path}.pieces: intervals end at {prev_end}, before the horizon")

    def rate_at(self, t: float) -> float:
        """Instantaneous rate in calls/second (batch kind: batch epochs/second)."""
        if self.kind == "piecewise":
            for a, b, r in self.pieces:
                if a <= t < b:
                    return r * self.density_scale / 3600.0
            return 0.0
        return self.rate * self.density_scale / 3600.0

    def max_rate(self) -> float:
        if self.kind == "piecewise":
            return max(r for _, _, r in self.pieces) * self.density_scale / 3600.0
        return self.rate * self.density_scale / 3600.0


def next_arrival_time(now: float, spec: ArrivalSpec, stream: RngStream) -> float | None:
    """Next arrival epoch after ``now``, or ``None`` if no arrival will ever come."""
    lam_max = spec.max_rate()
    if lam_max <= 0:
        return None
    if spec.kind != "piecewise":
        return now + stream.exponential(lam_max)
    end = spec.pieces[-1][1]
    t = now
    while True:
        t += stream.exponential(lam_max)
        if t >= end:
            return None
        if stream.uniform() * lam_max < spec.rate_at(t):
            return t


def batch_size(spec: ArrivalSpec, stream: RngStream) -> int:
    if spec.kind != "batch":
        return 1
    return stream.geometric(spec.batch_mean)


@dataclass
class ModalityMix:
    voice: float = 0.75
    text: float = 0.10
    voip: float = 0.10
    image_video: float = 0.05

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.voice, self.text, self.voip, self.image_video)

    def validate(self, path: str = "modality_mix") -> None:
        p = self.as_tuple()
        for name, v in zip(MODALITIES, p):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{path}.{name}: proportion must lie in [0, 1]")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError(f"{path}: proportions sum to {sum(p)!r}, expected 1")

    def cdf(self) -> list[float]:
        return list(accumulate(self.as_tuple()))


def sample_modality(mix: ModalityMix, stream: RngStream, cdf: list[float] | None = None) -> str:
    return MODALITIES[stream.choice_index(cdf if cdf is not None else mix.cdf())]


@dataclass
class SubRegion:
    x0: float
    y0: float
    x1: float
    y1: float
    psap: int

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass
class Region:
    """Rectangular jurisdiction ``[0, width] x [0, height]`` in miles."""

    width: float
    height: float
    subregions: list[SubRegion]

    def validate(self, path: str = "region") -> None:
        if not (self.width > 0 and self.height > 0):
            raise ConfigError(f"{path}: width and height must be > 0")
        if not self.subregions:
            raise ConfigError(f"{path}.subregions: at least one sub-region required")
        for i, s in enumerate(self.subregions):
            if not s.area > 0:
                raise ConfigError(f"{path}.subregions[{i}]: zero-area sub-region")
            if s.x0 < 0 or s.y0 < 0 or s.x1 > self.width or s.y1 > self.height:
                raise ConfigError(f"{path}.subregions[{i}]: extends outside the jurisdiction")
        for i, a in enumerate(self.subregions):
            for j in range(i + 1, len(self.subregions)):
                b = self.subregions[j]
                ox = min(a.x1, b.x1) - max(a.x0, b.x0)
                oy = min(a.y1, b.y1) - max(a.y0, b.y0)
                if ox > 1e-12 and oy > 1e-12:
                    raise ConfigError(f"{path}.subregions[{i}] overlaps subregions[{j}]")
        total = sum(s.area for s in self.subregions)
        if abs(total - self.width * self.height) > 1e-9 * self.width * self.height:
            raise ConfigError(f"{path}.subregions: do not tile the jurisdiction")

    def home_psap(self, x: float, y: float) -> int:
        # boundary points belong to the first listed sub-region
        for s in self.subregions:
            if s.contains(x, y):
                return s.psap
        raise ConfigError(f"point ({x}, {y}) lies outside every sub-region")

    def subregion_of(self, psap: int) -> SubRegion:
        for s in self.subregions:
            if s.psap == psap:
                return s
        raise ConfigError(f"no sub-region mapped to PSAP {psap}")


def sample_origin(region: Region, stream: RngStream) -> tuple[float, float]:
    return (stream.uniform() * region.width, stream.uniform() * region.height)


def strip_region(width: float, height: float, fractions: dict[int, float]) -> Region:
    """Split a rectangle into vertical strips with areas proportional to ``fractions``."""
    total = sum(fractions.values())
    subs = []
    x = 0.0
    items = list(fractions.items())
    for k, (psap, f) in enumerate(items):
        x1 = width if k == len(items) - 1 else x + width * f / total
        subs.append(SubRegion(x, 0.0, x1, height, psap))
        x = x1
    return Region(width, height, subs)
