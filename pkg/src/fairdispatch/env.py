"""The dispatching MDP over one day's request instance.

Actions are integers: 0 rejects the request, m in 1..M assigns it to
vehicle m using that vehicle's cheapest feasible insertion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from . import routing
from .routing import FleetState, InsertionResult
from .world import Geography, Request, RequestInstance

REJECT = 0
REWARD_MODES = ("rate_based", "modified", "priority")


class InfeasibleActionError(ValueError):
    """The action is not in the feasible set of the state it was applied to."""


@dataclass(frozen=True)
class RewardSpec:
    mode: str = "modified"
    alpha: float = 0.5
    priority: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in REWARD_MODES:
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.mode == "priority":
            if not self.priority or any(p <= 0 for p in self.priority):
                raise ValueError("priority mode needs positive per-region weights")


@dataclass(frozen=True)
class DispatchState:
    k: int  # 1-based index of the current request
    t: float
    request: Request
    fleet: FleetState
    psi_total: tuple[int, ...]
    psi_accept: tuple[int, ...]
    options: tuple[Optional[InsertionResult], ...]

    terminal = False

    @property
    def flags(self) -> tuple[int, ...]:
        return tuple(0 if o is None else 1 for o in self.options)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(0.0 if o is None else o.delta_minutes for o in self.options)

    @property
    def pending(self) -> tuple[tuple[int, float], ...]:
        """Accepted, not yet loaded customers with their deadlines."""
        return tuple((s.customer, s.deadline) for r in self.fleet.routes for s in r.stops)


@dataclass(frozen=True)
class Terminal:
    k: int  # number of requests processed
    t: float
    fleet: FleetState
    psi_total: tuple[int, ...]
    psi_accept: tuple[int, ...]

    terminal = True


State = Union[DispatchState, Terminal]


def _decision_state(k, request, fleet, psi_total, psi_accept, geography) -> DispatchState:
    opts = routing.insertion_options(fleet, request, request.time, geography)
    return DispatchState(k, request.time, request, fleet, psi_total, psi_accept, opts)


def reset(instance: RequestInstance, geography: Geography, fleet_size: int) -> State:
    fleet = FleetState.idle(fleet_size)
    zeros = (0,) * geography.n_regions
    if not instance.requests:
        fleet, _ = routing.advance(fleet, 0.0, geography.day_length_minutes, geography)
        return Terminal(0, geography.day_length_minutes, fleet, zeros, zeros)
    return _decision_state(1, instance.requests[0], fleet, zeros, zeros, geography)


def feasible_actions(state: DispatchState) -> list[int]:
    return [REJECT] + [m for m, o in enumerate(state.options, start=1) if o is not None]


def _rates(accept, total) -> list[float]:
    return [a / n if n else 0.0 for a, n in zip(accept, total)]


def reward_rate_based(state: DispatchState, action: int) -> tuple[float, float]:
    """Changes in the overall and in the minimal regional service rate.

    A region without requests yet counts as rate 0, so the first request
    leaves the minimum at 0 and the per-step changes telescope to the final
    rates.
    """
    a = 1 if action else 0
    k = state.k
    if k == 1:
        return float(a), 0.0
    accepted = sum(state.psi_accept)
    r_total = (a + accepted) / k - accepted / (k - 1)
    before = _rates(state.psi_accept, state.psi_total)
    j = state.request.region - 1
    after = list(before)
    after[j] = (state.psi_accept[j] + a) / (state.psi_total[j] + 1)
    return r_total, min(after) - min(before)


def min_service_region(psi_accept, expected_counts) -> int:
    """1-based region minimising accepted / expected count; ties to the lowest index."""
    best, best_val = 1, float("inf")
    for j, (a, n) in enumerate(zip(psi_accept, expected_counts), start=1):
        val = a / n if n > 0 else float("inf")
        if val < best_val:
            best, best_val = j, val
    return best


def reward_modified(state: DispatchState, action: int, geography: Geography, alpha: float) -> float:
    if not action:
        return 0.0
    counts = geography.expected_counts
    z = min_service_region(state.psi_accept, counts)
    if state.request.region == z:
        return 1.0 - alpha + alpha * geography.expected_total / counts[z - 1]
    return 1.0 - alpha


def reward_priority(state: DispatchState, action: int, priority) -> float:
    return float(priority[state.request.region - 1]) if action else 0.0


def reward(state: DispatchState, action: int, geography: Geography, spec: RewardSpec) -> float:
    if spec.mode == "modified":
        return reward_modified(state, action, geography, spec.alpha)
    if spec.mode == "rate_based":
        r_total, r_min = reward_rate_based(state, action)
        return (1.0 - spec.alpha) * r_total + spec.alpha * r_min
    return reward_priority(state, action, spec.priority)


def step(
    state: DispatchState,
    action: int,
    instance: RequestInstance,
    geography: Geography,
    spec: RewardSpec,
) -> tuple[State, float]:
    if action != REJECT and not (1 <= action <= len(state.options) and state.options[action - 1] is not None):
        raise InfeasibleActionError(f"action {action} infeasible at request {state.k}")
    r = reward(state, action, geography, spec)

    fleet = state.fleet
    if action:
        cand = state.options[action - 1].candidate
        routing.validate_route(cand, geography, state.t)
        fleet = fleet.with_route(action, cand)
    j = state.request.region - 1
    psi_total = list(state.psi_total)
    psi_total[j] += 1
    psi_accept = list(state.psi_accept)
    if action:
        psi_accept[j] += 1
    psi_total, psi_accept = tuple(psi_total), tuple(psi_accept)

    if state.k < len(instance.requests):
        nxt = instance.requests[state.k]
        fleet, _ = routing.advance(fleet, state.t, nxt.time, geography)
        return _decision_state(state.k + 1, nxt, fleet, psi_total, psi_accept, geography), r
    t_max = geography.day_length_minutes
    fleet, _ = routing.advance(fleet, state.t, t_max, geography)
    return Terminal(state.k, t_max, fleet, psi_total, psi_accept), r
