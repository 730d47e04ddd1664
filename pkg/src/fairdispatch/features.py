"""State featurization for the Q-network.

Layout: [time] + one-hot region (J) + [depot->customer travel time]
+ return times (M) + feasibility flags (M) + insertion deltas (M)
+ acceptance rates so far (J). Bounds are fixed from the day length so
training and test data are normalized identically.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .env import DispatchState
from .world import Geography


def feature_dim(n_regions: int, fleet_size: int) -> int:
    return 2 + 2 * n_regions + 3 * fleet_size


def feature_schema(geography: Geography, fleet_size: int) -> list[dict]:
    t_max = geography.day_length_minutes
    J = geography.n_regions
    rows = [{"name": "time", "min": 0.0, "max": t_max}]
    rows += [{"name": f"region_{j}", "min": 0.0, "max": 1.0} for j in range(1, J + 1)]
    rows.append({"name": "depot_travel_time", "min": 0.0, "max": t_max})
    rows += [{"name": f"return_time_{m}", "min": 0.0, "max": t_max} for m in range(1, fleet_size + 1)]
    rows += [{"name": f"feasible_{m}", "min": 0.0, "max": 1.0} for m in range(1, fleet_size + 1)]
    rows += [{"name": f"insertion_delta_{m}", "min": 0.0, "max": t_max} for m in range(1, fleet_size + 1)]
    rows += [{"name": f"acceptance_rate_{j}", "min": 0.0, "max": 1.0} for j in range(1, J + 1)]
    return rows


def schema_json(geography: Geography, fleet_size: int) -> str:
    return json.dumps({"dimension": feature_dim(geography.n_regions, fleet_size),
                       "features": feature_schema(geography, fleet_size)}, indent=2) + "\n"


def _clip(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def featurize(state: DispatchState, geography: Geography) -> np.ndarray:
    t_max = geography.day_length_minutes
    req = state.request
    depot = geography.depot
    x = [state.t / t_max]
    onehot = [0.0] * geography.n_regions
    onehot[req.region - 1] = 1.0
    x += onehot
    d = math.hypot(req.location[0] - depot[0], req.location[1] - depot[1]) * geography.minutes_per_km
    x.append(_clip(d / t_max))
    x += [_clip(r.depot_return / t_max) for r in state.fleet.routes]
    opts = state.options
    x += [0.0 if o is None else 1.0 for o in opts]
    x += [0.0 if o is None else _clip(o.delta_minutes / t_max) for o in opts]
    x += [a / n if n else 0.0 for a, n in zip(state.psi_accept, state.psi_total)]
    return np.array(x)
