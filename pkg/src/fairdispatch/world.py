"""Service geographies, travel times and daily request instances."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

Point = tuple[float, float]


class GeographyError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    id: int
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax (km)
    center: Point
    arrival_rate: float

    @property
    def expected_count(self) -> float:
        return self.arrival_rate

    def contains(self, p: Point) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin < p[0] < xmax and ymin < p[1] < ymax


@dataclass(frozen=True)
class Geography:
    regions: tuple[RegionSpec, ...]
    depot: Point
    day_length_minutes: float = 480.0
    request_cutoff_minutes: float = 420.0
    deadline_minutes: float = 240.0
    speed_km_per_h: float = 30.0
    circuity_factor: float = 1.4
    load_time_minutes: float = 3.0
    dropoff_time_minutes: float = 3.0
    location_stdev_km: float = 3.0
    name: str = "custom"

    def __post_init__(self):
        if not self.regions:
            raise GeographyError("geography needs at least one region")
        if not (self.day_length_minutes > self.request_cutoff_minutes > 0):
            raise GeographyError("need day_length > request_cutoff > 0")
        if self.deadline_minutes <= 0:
            raise GeographyError("deadline must be positive")
        if self.speed_km_per_h <= 0:
            raise GeographyError("speed must be positive")
        if self.circuity_factor < 1:
            raise GeographyError("circuity factor must be >= 1")
        if self.location_stdev_km <= 0:
            raise GeographyError("location stdev must be positive")
        ids = [r.id for r in self.regions]
        if ids != list(range(1, len(ids) + 1)):
            raise GeographyError(f"region ids must be 1..J in order, got {ids}")
        for r in self.regions:
            xmin, ymin, xmax, ymax = r.bounds
            if not (xmin < xmax and ymin < ymax):
                raise GeographyError(f"region {r.id} has empty bounds")
            if not r.contains(r.center):
                raise GeographyError(f"region {r.id} center lies outside its bounds")
            if not r.arrival_rate >= 0:
                raise GeographyError(f"region {r.id} arrival rate must be >= 0")
        for a in self.regions:
            for b in self.regions:
                if a.id < b.id and _overlap(a.bounds, b.bounds):
                    raise GeographyError(f"regions {a.id} and {b.id} overlap")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def expected_counts(self) -> tuple[float, ...]:
        return tuple(r.arrival_rate for r in self.regions)

    @property
    def expected_total(self) -> float:
        return float(sum(self.expected_counts))

    @property
    def minutes_per_km(self) -> float:
        return self.circuity_factor * 60.0 / self.speed_km_per_h

    def with_arrival_rates(self, rates: Sequence[float]) -> "Geography":
        if len(rates) != self.n_regions:
            raise GeographyError("one arrival rate per region required")
        regions = tuple(replace(r, arrival_rate=float(lam)) for r, lam in zip(self.regions, rates))
        return replace(self, regions=regions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regions"] = [
            {"id": r.id, "bounds": list(r.bounds), "center": list(r.center), "arrival_rate": r.arrival_rate}
            for r in self.regions
        ]
        d["depot"] = list(self.depot)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Geography":
        try:
            regions = tuple(
                RegionSpec(
                    id=int(r["id"]),
                    bounds=tuple(float(v) for v in r["bounds"]),
                    center=tuple(float(v) for v in r["center"]),
                    arrival_rate=float(r["arrival_rate"]),
                )
                for r in d["regions"]
            )
            kwargs = {k: v for k, v in d.items() if k not in ("regions", "depot")}
            return cls(regions=regions, depot=tuple(float(v) for v in d["depot"]), **kwargs)
        except (KeyError, TypeError) as e:
            raise GeographyError(f"malformed geography: {e}") from e

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Geography":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def travel_time(a: Point, b: Point, geography: Geography) -> float:
    """Road-equivalent travel time in minutes between two points in km."""
    return math.hypot(a[0] - b[0], a[1] - b[1]) * geography.minutes_per_km


def builtin_geography(
    kind: str,
    depot_offset: Optional[Point] = None,
    d: float = 3.0,
    arrival_rates: Optional[Sequence[float]] = None,
) -> Geography:
    """The two-region layouts used for experiments.

    ``dist``: three d x 2d strips side by side; the middle one takes no
    requests and the depot sits at the center of the right-hand region.
    ``dens``: two d x 2d strips; depot at the midpoint of the shared edge.
    """
    if kind == "dist":
        regions = (
            RegionSpec(1, (0.0, 0.0, d, 2 * d), (d / 2, d), 250.0),
            RegionSpec(2, (2 * d, 0.0, 3 * d, 2 * d), (2.5 * d, d), 250.0),
        )
        depot = (2.5 * d, d)
        box = (0.0, 0.0, 3 * d, 2 * d)
    elif kind == "dens":
        regions = (
            RegionSpec(1, (0.0, 0.0, d, 2 * d), (d / 2, d), 100.0),
            RegionSpec(2, (d, 0.0, 2 * d, 2 * d), (1.5 * d, d), 400.0),
        )
        depot = (d, d)
        box = (0.0, 0.0, 2 * d, 2 * d)
    else:
        raise GeographyError(f"unknown builtin geography {kind!r}")
    if depot_offset is not None:
        depot = (depot[0] + depot_offset[0], depot[1] + depot_offset[1])
        xmin, ymin, xmax, ymax = box
        if not (xmin - d <= depot[0] <= xmax + d and ymin - d <= depot[1] <= ymax + d):
            raise GeographyError(f"depot {depot} lies outside the service box plus a {d} km margin")
    geo = Geography(regions=regions, depot=depot, name=kind)
    if arrival_rates is not None:
        geo = geo.with_arrival_rates(arrival_rates)
    return geo


def depot_offsets(geography: Geography, count: int = 5) -> list[Point]:
    """Evenly spaced depot displacements along the axis from Region 1's center to Region 2's."""
    c1, c2 = geography.regions[0].center, geography.regions[1].center
    out = []
    for i in range(count):
        f = i / (count - 1) if count > 1 else 0.5
        p = (c1[0] + f * (c2[0] - c1[0]), c1[1] + f * (c2[1] - c1[1]))
        out.append((p[0] - geography.depot[0], p[1] - geography.depot[1]))
    return out


@dataclass(frozen=True)
class Request:
    index: int
    time: float
    location: Point
    region: int
    deadline: float


@dataclass(frozen=True)
class RequestInstance:
    requests: tuple[Request, ...]
    seed: int = 0

    def __len__(self) -> int:
        return len(self.requests)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "time_min", "x_km", "y_km", "region", "deadline_min"])
        for r in self.requests:
            w.writerow([r.index, f"{r.time:.3f}", f"{r.location[0]:.6f}", f"{r.location[1]:.6f}",
                        r.region, f"{r.deadline:.3f}"])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path, seed: int = 0) -> "RequestInstance":
        reqs = []
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                reqs.append(Request(
                    index=int(row["index"]),
                    time=float(row["time_min"]),
                    location=(float(row["x_km"]), float(row["y_km"])),
                    region=int(row["region"]),
                    deadline=float(row["deadline_min"]),
                ))
        return cls(tuple(reqs), seed)


def _sample_locations(rng: np.random.Generator, region: RegionSpec, stdev: float, n: int) -> np.ndarray:
    """``n`` normal draws around the region center, rejection-resampled into its bounds."""
    xmin, ymin, xmax, ymax = region.bounds
    out = np.empty((0, 2))
    while len(out) < n:
        need = n - len(out)
        pts = rng.normal(region.center, stdev, size=(4 * need + 8, 2))
        inside = (pts[:, 0] > xmin) & (pts[:, 0] < xmax) & (pts[:, 1] > ymin) & (pts[:, 1] < ymax)
        out = np.vstack([out, pts[inside][:need]])
    return out


def sample_instance(geography: Geography, seed: int) -> RequestInstance:
    rng = np.random.default_rng(seed)
    drawn = []
    for region in geography.regions:
        n = int(rng.poisson(region.arrival_rate)) if region.arrival_rate > 0 else 0
        times = rng.uniform(0.0, geography.request_cutoff_minutes, size=n)
        locs = _sample_locations(rng, region, geography.location_stdev_km, n)
        drawn += [(float(t), region.id, (float(x), float(y))) for t, (x, y) in zip(times, locs)]
    drawn.sort(key=lambda r: (r[0], r[1]))
    reqs = tuple(
        Request(index=k, time=t, location=loc, region=j, deadline=t + geography.deadline_minutes)
        for k, (t, j, loc) in enumerate(drawn, start=1)
    )
    return RequestInstance(reqs, seed)


def sample_pool(geography: Geography, first_seed: int, count: int) -> list[RequestInstance]:
    return [sample_instance(geography, first_seed + i) for i in range(count)]
