"""Planned routes, the six feasibility conditions, and cheapest insertion.

Times are float minutes. A planned route departs at the latest time that
still meets every stop deadline and the end of day, so waiting at the depot
is maximal and later requests can be consolidated into the same tour.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .world import Geography, Point, Request

TOL = 1e-6


class RouteViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Stop:
    customer: int
    location: Point
    deadline: float
    arrival: float


@dataclass(frozen=True)
class PlannedRoute:
    depot_return: float
    load_start: float
    stops: tuple[Stop, ...] = ()
    final_return: float = 0.0

    @classmethod
    def empty(cls, depot_return: float) -> "PlannedRoute":
        return cls(depot_return, depot_return, (), depot_return)

    @property
    def is_empty(self) -> bool:
        return not self.stops

    @property
    def duration(self) -> float:
        return 0.0 if not self.stops else self.final_return - self.load_start

    @property
    def customers(self) -> tuple[int, ...]:
        return tuple(s.customer for s in self.stops)


@dataclass(frozen=True)
class InsertionResult:
    vehicle: int  # 1-based; 0 when the route was evaluated on its own
    position: int
    delta_minutes: float
    candidate: PlannedRoute


@dataclass(frozen=True)
class FleetState:
    routes: tuple[PlannedRoute, ...]
    # departed tours in departure order, as (vehicle, route)
    tours: tuple[tuple[int, PlannedRoute], ...] = ()

    @classmethod
    def idle(cls, size: int) -> "FleetState":
        if size < 1:
            raise ValueError("fleet needs at least one vehicle")
        return cls(tuple(PlannedRoute.empty(0.0) for _ in range(size)))

    @property
    def size(self) -> int:
        return len(self.routes)

    @property
    def ongoing_returns(self) -> tuple[float, ...]:
        return tuple(r.depot_return for r in self.routes)

    def planned(self, vehicle: int) -> PlannedRoute:
        return self.routes[vehicle - 1]

    def with_route(self, vehicle: int, route: PlannedRoute) -> "FleetState":
        routes = list(self.routes)
        routes[vehicle - 1] = route
        return replace(self, routes=tuple(routes))


def build_route(
    depot_return: float,
    load_start: float,
    customers: Iterable[tuple[int, Point, float]],
    geography: Geography,
) -> PlannedRoute:
    """Schedule (customer, location, deadline) triples departing at ``load_start``."""
    k = geography.minutes_per_km
    depot = geography.depot
    stops = []
    t = load_start + geography.load_time_minutes
    here = depot
    for cid, loc, dl in customers:
        t += math.hypot(loc[0] - here[0], loc[1] - here[1]) * k
        stops.append(Stop(cid, loc, dl, t))
        t += geography.dropoff_time_minutes
        here = loc
    if not stops:
        return PlannedRoute.empty(depot_return)
    t += math.hypot(depot[0] - here[0], depot[1] - here[1]) * k
    return PlannedRoute(depot_return, load_start, tuple(stops), t)


def cheapest_insertion(
    planned: PlannedRoute, request: Request, now: float, geography: Geography
) -> Optional[InsertionResult]:
    """Best feasible position for ``request`` in ``planned``, or None.

    Each position is checked in O(1) from prefix/suffix minima of the
    per-stop slack (deadline minus offset from departure), which bounds the
    latest feasible departure after the insertion.
    """
    k = geography.minutes_per_km
    depot = geography.depot
    t_load = geography.load_time_minutes
    t_drop = geography.dropoff_time_minutes
    t_max = geography.day_length_minutes
    earliest = max(planned.depot_return, now)
    cx, cy = request.location
    dl = request.deadline
    stops = planned.stops
    h = len(stops)

    if h == 0:
        d = math.hypot(cx - depot[0], cy - depot[1]) * k
        off_c = t_load + d
        duration = off_c + t_drop + d
        latest = min(dl - off_c, t_max - duration)
        if latest < earliest - TOL:
            return None
        s = max(latest, earliest)
        arrival = s + off_c
        cand = PlannedRoute(planned.depot_return, s,
                            (Stop(request.index, request.location, dl, arrival),),
                            arrival + t_drop + d)
        return InsertionResult(0, 0, duration, cand)

    s = planned.load_start
    duration = planned.final_return - s
    pts = [depot] + [st.location for st in stops] + [depot]
    to_c = [math.hypot(cx - p[0], cy - p[1]) * k for p in pts]
    legs = [math.hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]) * k for i in range(h + 1)]
    offs = [st.arrival - s for st in stops]
    slack = [st.deadline - o for st, o in zip(stops, offs)]
    suffix = [math.inf] * (h + 1)
    for i in range(h - 1, -1, -1):
        suffix[i] = min(slack[i], suffix[i + 1])

    best_pos = -1
    best_delta = math.inf
    best_latest = 0.0
    prefix = math.inf
    for p in range(h + 1):
        delta = to_c[p] + to_c[p + 1] - legs[p] + t_drop
        off_c = t_load + to_c[0] if p == 0 else offs[p - 1] + t_drop + to_c[p]
        latest = min(prefix, dl - off_c, suffix[p] - delta, t_max - duration - delta)
        if latest >= earliest - TOL and delta < best_delta:
            best_pos, best_delta, best_latest = p, delta, latest
        if p < h:
            prefix = min(prefix, slack[p])
    if best_pos < 0:
        return None

    seq = [(st.customer, st.location, st.deadline) for st in stops]
    seq.insert(best_pos, (request.index, request.location, dl))
    cand = build_route(planned.depot_return, max(best_latest, earliest), seq, geography)
    return InsertionResult(0, best_pos, best_delta, cand)


def insertion_options(
    fleet: FleetState, request: Request, now: float, geography: Geography
) -> tuple[Optional[InsertionResult], ...]:
    out = []
    for m, route in enumerate(fleet.routes, start=1):
        res = cheapest_insertion(route, request, now, geography)
        out.append(None if res is None else replace(res, vehicle=m))
    return tuple(out)


def feasibility_vector(
    fleet: FleetState, request: Request, now: float, geography: Geography
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    opts = insertion_options(fleet, request, now, geography)
    flags = tuple(0 if o is None else 1 for o in opts)
    deltas = tuple(0.0 if o is None else o.delta_minutes for o in opts)
    return flags, deltas


def best_option(options: Iterable[Optional[InsertionResult]]) -> Optional[InsertionResult]:
    """Smallest delta; ties go to the lowest vehicle index."""
    best = None
    for o in options:
        if o is not None and (best is None or o.delta_minutes < best.delta_minutes):
            best = o
    return best


def assign(
    fleet: FleetState, request: Request, now: float, geography: Geography
) -> Optional[tuple[int, FleetState]]:
    best = best_option(insertion_options(fleet, request, now, geography))
    if best is None:
        return None
    return best.vehicle, fleet.with_route(best.vehicle, best.candidate)


def advance(
    fleet: FleetState, from_t: float, to_t: float, geography: Geography
) -> tuple[FleetState, set[int]]:
    """Freeze every planned route whose departure falls by ``to_t``.

    A route whose departure equals ``from_t`` (it was pushed to depart at
    the decision instant) is frozen too.
    """
    if from_t > to_t:
        raise ValueError(f"cannot advance backwards from {from_t} to {to_t}")
    loaded: set[int] = set()
    routes = list(fleet.routes)
    tours = list(fleet.tours)
    departures = sorted(
        (r.load_start, m) for m, r in enumerate(routes, start=1) if r.stops and r.load_start <= to_t
    )
    for _, m in departures:
        route = routes[m - 1]
        tours.append((m, route))
        loaded.update(route.customers)
        routes[m - 1] = PlannedRoute.empty(route.final_return)
    if not departures:
        return fleet, loaded
    return FleetState(tuple(routes), tuple(tours)), loaded


def validate_route(route: PlannedRoute, geography: Geography, now: Optional[float] = None) -> None:
    """Raise RouteViolation unless conditions 2-6 hold for ``route``."""
    if not route.stops:
        return
    k = geography.minutes_per_km
    if route.load_start < route.depot_return - TOL:
        raise RouteViolation("loading starts before the vehicle is back at the depot")
    if now is not None and route.load_start < now - TOL:
        raise RouteViolation("planned departure lies in the past")
    here = geography.depot
    t = route.load_start + geography.load_time_minutes
    for i, st in enumerate(route.stops):
        t += math.hypot(st.location[0] - here[0], st.location[1] - here[1]) * k
        if abs(st.arrival - t) > TOL:
            raise RouteViolation(f"stop {i} arrival {st.arrival} inconsistent with schedule {t}")
        if st.arrival > st.deadline + TOL:
            raise RouteViolation(f"customer {st.customer} arrives after its deadline")
        t = st.arrival + geography.dropoff_time_minutes
        here = st.location
    t += math.hypot(geography.depot[0] - here[0], geography.depot[1] - here[1]) * k
    if abs(route.final_return - t) > TOL:
        raise RouteViolation("final return inconsistent with schedule")
    if route.final_return > geography.day_length_minutes + TOL:
        raise RouteViolation("vehicle returns after the end of the day")


def trace_csv(fleet: FleetState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vehicle", "event", "time_min", "customer"])
    for m, route in fleet.tours:
        w.writerow([m, "depart", f"{route.load_start:.3f}", ""])
        for st in route.stops:
            w.writerow([m, "arrive", f"{st.arrival:.3f}", st.customer])
        w.writerow([m, "return", f"{route.final_return:.3f}", ""])
    return buf.getvalue()
