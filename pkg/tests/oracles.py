"""Independent reference computations used by the tests.

Nothing here calls into the routing or reward code under test: schedules are
rebuilt stop by stop from ``world.travel_time`` and rates are recounted from
raw counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from fairdispatch.routing import FleetState, PlannedRoute, Stop
from fairdispatch.world import Geography, Request, travel_time

TOL = 1e-6


def schedule(seq, depart: float, geo: Geography):
    """Arrival times and depot return for stops visited in order from ``depart``."""
    t = depart + geo.load_time_minutes
    here = geo.depot
    arrivals = []
    for _, loc, _ in seq:
        t += travel_time(here, loc, geo)
        arrivals.append(t)
        t += geo.dropoff_time_minutes
        here = loc
    return arrivals, t + travel_time(here, geo.depot, geo)


def feasible_at(seq, depart: float, geo: Geography) -> bool:
    arrivals, end = schedule(seq, depart, geo)
    if end > geo.day_length_minutes + TOL:
        return False
    return all(a <= dl + TOL for a, (_, _, dl) in zip(arrivals, seq))


def duration(seq, geo: Geography) -> float:
    if not seq:
        return 0.0
    arrivals, end = schedule(seq, 0.0, geo)
    return end


def latest_departure(seq, geo: Geography) -> float:
    """Latest departure meeting every deadline and the end of day (may be < any bound)."""
    arrivals, end = schedule(seq, 0.0, geo)
    return min([dl - a for a, (_, _, dl) in zip(arrivals, seq)] + [geo.day_length_minutes - end])


@dataclass
class Option:
    vehicle: int
    position: int
    delta: float


def enumerate_insertions(route: PlannedRoute, request: Request, now: float, geo: Geography,
                         vehicle: int = 0) -> list[Option]:
    """Every feasible position, with its duration increase from a full recompute."""
    seq = [(s.customer, s.location, s.deadline) for s in route.stops]
    base = duration(seq, geo)
    earliest = max(route.depot_return, now)
    out = []
    for p in range(len(seq) + 1):
        trial = seq[:p] + [(request.index, request.location, request.deadline)] + seq[p:]
        # lateness only grows with the departure time, so the earliest one decides
        if feasible_at(trial, earliest, geo):
            out.append(Option(vehicle, p, duration(trial, geo) - base))
    return out


def best_insertion(route, request, now, geo) -> Optional[Option]:
    opts = enumerate_insertions(route, request, now, geo)
    return min(opts, key=lambda o: (o.delta, o.position)) if opts else None


def best_fleet_insertion(fleet: FleetState, request, now, geo) -> Optional[Option]:
    opts = []
    for m, route in enumerate(fleet.routes, start=1):
        opts += enumerate_insertions(route, request, now, geo, m)
    return min(opts, key=lambda o: (o.delta, o.vehicle, o.position)) if opts else None


def make_route(depot_return: float, depart: float, seq, geo: Geography) -> PlannedRoute:
    if not seq:
        return PlannedRoute.empty(depot_return)
    arrivals, end = schedule(seq, depart, geo)
    stops = tuple(Stop(c, loc, dl, a) for (c, loc, dl), a in zip(seq, arrivals))
    return PlannedRoute(depot_return, depart, stops, end)


def _bbox(geo: Geography):
    xs = [r.bounds[0] for r in geo.regions] + [r.bounds[2] for r in geo.regions]
    ys = [r.bounds[1] for r in geo.regions] + [r.bounds[3] for r in geo.regions]
    return min(xs), min(ys), max(xs), max(ys)


def random_point(rng: np.random.Generator, geo: Geography):
    x0, y0, x1, y1 = _bbox(geo)
    return (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))


def random_micro_instance(rng: np.random.Generator, geo: Geography, max_pending: int = 6):
    """A random fleet of 1-2 valid planned routes (at most ``max_pending`` stops in all),
    a decision time, and a new request arriving at that time."""
    n_vehicles = int(rng.integers(1, 3))
    now = float(rng.uniform(0, geo.day_length_minutes - 20))
    tight = rng.random() < 0.5
    budget = int(rng.integers(0, max_pending + 1))
    routes = []
    cid = 1
    for m in range(n_vehicles):
        n = budget if m == n_vehicles - 1 else int(rng.integers(0, budget + 1))
        budget -= n
        depot_return = float(rng.uniform(max(0.0, now - 60), now + 90)) if rng.random() < 0.6 else 0.0
        earliest = max(depot_return, now)
        seq = []
        for _ in range(n):
            horizon = 45.0 if tight else geo.deadline_minutes
            seq.append((cid, random_point(rng, geo), now + float(rng.uniform(0, horizon))))
            cid += 1
        while seq and latest_departure(seq, geo) < earliest:
            seq.pop()
        if seq:
            latest = latest_departure(seq, geo)
            # the dispatcher keeps routes at their latest departure; also try slack ones
            depart = latest if rng.random() < 0.5 else float(rng.uniform(earliest, latest))
            routes.append(make_route(depot_return, depart, seq, geo))
        else:
            routes.append(PlannedRoute.empty(depot_return))
    req = Request(100, now, random_point(rng, geo), 1, now + geo.deadline_minutes)
    return FleetState(tuple(routes)), req, now


# ---- rates -----------------------------------------------------------------

def exact_rate(accepted: int, total: int) -> Fraction:
    return Fraction(accepted, total) if total else Fraction(0)


def recount(decisions, n_regions: int):
    """Per-region (accepted, total) recounted from a decision log."""
    acc = [0] * n_regions
    tot = [0] * n_regions
    for d in decisions:
        tot[d.region - 1] += 1
        if d.action:
            acc[d.region - 1] += 1
    return acc, tot


def final_rates(acc, tot):
    r_total = sum(acc) / sum(tot) if sum(tot) else 0.0
    seen = [a / n for a, n in zip(acc, tot) if n]
    return r_total, (min(seen) if seen else 0.0)


def isclose(a, b, tol=1e-9) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
