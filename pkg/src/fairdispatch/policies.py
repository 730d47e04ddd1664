"""Decision rules: baseline, benchmark, and greedy Q-network policies."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from . import routing
from .approximator import MLP
from .env import REJECT, DispatchState
from .features import featurize
from .world import Geography


class Policy(Protocol):
    name: str

    def reset(self) -> None: ...

    def decide(self, state: DispatchState) -> int: ...


class _Stateless:
    name = "policy"

    def reset(self) -> None:
        pass


def _myopic_action(options) -> int:
    best = routing.best_option(options)
    return REJECT if best is None else best.vehicle


class Myopic(_Stateless):
    """Accept whenever feasible; use the vehicle with the smallest insertion delta."""

    name = "myopic"

    def decide(self, state: DispatchState) -> int:
        return _myopic_action(state.options)


class RejectAll(_Stateless):
    name = "reject_all"

    def decide(self, state: DispatchState) -> int:
        return REJECT


class Bucket(_Stateless):
    """Cap each region's accumulated acceptance rate at ``kappa``.

    During the warm-up window every feasible request is accepted. Warm-up
    acceptances count toward the accumulated rates afterwards. A cap of 1
    imposes no restriction, so ``Bucket(1.0)`` behaves like ``Myopic``.
    """

    def __init__(self, kappa: float, warmup_minutes: float = 30.0):
        if not 0.0 <= kappa <= 1.0:
            raise ValueError("kappa_B must lie in [0, 1]")
        self.kappa = kappa
        self.warmup_minutes = warmup_minutes
        self.name = f"bucket({kappa:.2f})"

    def decide(self, state: DispatchState) -> int:
        action = _myopic_action(state.options)
        if action == REJECT or state.t < self.warmup_minutes or self.kappa >= 1.0:
            return action
        j = state.request.region - 1
        total = state.psi_total[j]
        rate = state.psi_accept[j] / total if total else 0.0
        return action if rate < self.kappa else REJECT


class Reserved(_Stateless):
    """Vehicles 1..kappa serve Region 1 only, the rest serve Region 2 only."""

    def __init__(self, kappa: int, fleet_size: int, n_regions: int = 2):
        if n_regions != 2:
            raise ValueError("the reserved-vehicle policy is defined for two regions only")
        if not 1 <= kappa <= fleet_size - 1:
            raise ValueError(f"kappa_R must lie in 1..{fleet_size - 1}, got {kappa}")
        self.kappa = kappa
        self.fleet_size = fleet_size
        self.name = f"reserved({kappa})"

    def allowed(self, region: int) -> range:
        if region == 1:
            return range(1, self.kappa + 1)
        return range(self.kappa + 1, self.fleet_size + 1)

    def decide(self, state: DispatchState) -> int:
        opts = [state.options[m - 1] for m in self.allowed(state.request.region)]
        return _myopic_action(opts)


def greedy_action(q: np.ndarray, flags) -> int:
    """Argmax of q over feasible actions; vehicles in index order win ties, reject last."""
    best, best_q = REJECT, -np.inf
    for m, f in enumerate(flags, start=1):
        if f and q[m] > best_q:
            best, best_q = m, q[m]
    if q[REJECT] > best_q:
        best = REJECT
    return best


class GreedyQ(_Stateless):
    def __init__(self, net: MLP, geography: Geography, name: str = "dql"):
        self.net = net
        self.geography = geography
        self.name = name

    def decide(self, state: DispatchState) -> int:
        q = self.net.forward(featurize(state, self.geography))
        return greedy_action(q, state.flags)


def greedy_policy(checkpoint: MLP, geography: Geography, name: str = "dql") -> GreedyQ:
    return GreedyQ(checkpoint, geography, name)
