"""Running policies over request pools and summarising service rates."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import env
from .env import RewardSpec
from .policies import Bucket, GreedyQ, Policy, Reserved
from .routing import FleetState
from .world import Geography, RequestInstance, sample_instance

N_QUARTERS = 4


@dataclass(frozen=True)
class Decision:
    k: int
    t: float
    region: int
    action: int
    reward: float
    r_total_change: float
    r_min_change: float
    psi_accept: tuple[int, ...]  # before the decision
    psi_total: tuple[int, ...]


@dataclass
class EpisodeLog:
    seed: int
    decisions: list[Decision]
    fleet: FleetState
    psi_total: tuple[int, ...]
    psi_accept: tuple[int, ...]

    @property
    def accepted(self) -> int:
        return sum(self.psi_accept)

    def to_csv(self) -> str:
        J = len(self.psi_total)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "time_min", "region", "action", "vehicle", "reward"]
                   + [f"psi_accept_{j}" for j in range(1, J + 1)]
                   + [f"psi_total_{j}" for j in range(1, J + 1)])
        for d in self.decisions:
            w.writerow([d.k, f"{d.t:.3f}", d.region, "assign" if d.action else "reject",
                        d.action if d.action else "", repr(d.reward), *d.psi_accept, *d.psi_total])
        return buf.getvalue()


def run_episode(
    policy: Policy,
    instance: RequestInstance,
    geography: Geography,
    fleet_size: int,
    reward_spec: RewardSpec = RewardSpec("rate_based", 0.5),
) -> EpisodeLog:
    policy.reset()
    state = env.reset(instance, geography, fleet_size)
    decisions = []
    while not state.terminal:
        action = policy.decide(state)
        r_total, r_min = env.reward_rate_based(state, action)
        nxt, r = env.step(state, action, instance, geography, reward_spec)
        decisions.append(Decision(state.k, state.t, state.request.region, action, r,
                                  r_total, r_min, state.psi_accept, state.psi_total))
        state = nxt
    return EpisodeLog(instance.seed, decisions, state.fleet, state.psi_total, state.psi_accept)


def _rate(a, n) -> float:
    return a / n if n else 0.0


@dataclass
class EvalReport:
    policy: str
    days: int
    seeds: tuple[int, int]
    utility: float  # mean accepted requests per day
    utility_std: float
    accepted: list[int]  # per region, summed over days
    total: list[int]
    quarter_accepted: list[list[int]]  # [quarter][region]
    quarter_total: list[list[int]]

    @property
    def r_total(self) -> float:
        return _rate(sum(self.accepted), sum(self.total))

    @property
    def r_regions(self) -> list[float]:
        return [_rate(a, n) for a, n in zip(self.accepted, self.total)]

    @property
    def r_min(self) -> float:
        return min(self.r_regions)

    @property
    def r_max(self) -> float:
        return max(self.r_regions)

    @property
    def quarters(self) -> list[tuple[float, float]]:
        out = []
        for acc, tot in zip(self.quarter_accepted, self.quarter_total):
            rates = [_rate(a, n) for a, n in zip(acc, tot)]
            out.append((_rate(sum(acc), sum(tot)), min(rates)))
        return out

    def objective(self, alpha: float = 0.5) -> float:
        return (1 - alpha) * self.r_total + alpha * self.r_min

    def summary(self) -> dict:
        d = {
            "policy": self.policy, "days": self.days, "seeds": list(self.seeds),
            "utility": self.utility, "utility_std": self.utility_std,
            "r_total": self.r_total, "r_min": self.r_min, "r_max": self.r_max,
        }
        for j, r in enumerate(self.r_regions, start=1):
            d[f"r_{j}"] = r
        d["quarters"] = [{"r_total": a, "r_min": b} for a, b in self.quarters]
        d["accepted"] = self.accepted
        d["total"] = self.total
        return d

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2) + "\n"

    def to_csv(self) -> str:
        J = len(self.total)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "days", "utility", "r_total", "r_min", "r_max"]
                   + [f"r_{j}" for j in range(1, J + 1)]
                   + [f"q{q}_{m}" for q in range(1, N_QUARTERS + 1) for m in ("r_total", "r_min")])
        quarter_cells = [f"{v:.6f}" for pair in self.quarters for v in pair]
        w.writerow([self.policy, self.days, f"{self.utility:.6f}", f"{self.r_total:.6f}",
                    f"{self.r_min:.6f}", f"{self.r_max:.6f}"]
                   + [f"{r:.6f}" for r in self.r_regions] + quarter_cells)
        return buf.getvalue()


def _tally(logs: Sequence[EpisodeLog], geography: Geography):
    J = geography.n_regions
    q_len = geography.day_length_minutes / N_QUARTERS
    acc = [0] * J
    tot = [0] * J
    q_acc = [[0] * J for _ in range(N_QUARTERS)]
    q_tot = [[0] * J for _ in range(N_QUARTERS)]
    per_day = []
    for log in logs:
        for d in log.decisions:
            j = d.region - 1
            q = min(int(d.t // q_len), N_QUARTERS - 1)
            tot[j] += 1
            q_tot[q][j] += 1
            if d.action:
                acc[j] += 1
                q_acc[q][j] += 1
        per_day.append(log.accepted)
    return acc, tot, q_acc, q_tot, per_day


def _run_chunk(args):
    policy, instances, geography, fleet_size = args
    return [run_episode(policy, inst, geography, fleet_size) for inst in instances]


def run_pool(policy: Policy, geography: Geography, fleet_size: int,
             instances: Sequence[RequestInstance], jobs: int = 1) -> list[EpisodeLog]:
    if jobs <= 1 or len(instances) < 2:
        return _run_chunk((policy, instances, geography, fleet_size))
    chunks = [instances[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_run_chunk, [(policy, c, geography, fleet_size) for c in chunks]))
    # undo the round-robin split so results follow the input order
    logs = [None] * len(instances)
    for i, part in enumerate(parts):
        logs[i::jobs] = part
    return logs


def report_from_logs(name: str, logs: Sequence[EpisodeLog], geography: Geography) -> EvalReport:
    acc, tot, q_acc, q_tot, per_day = _tally(logs, geography)
    seeds = [log.seed for log in logs]
    return EvalReport(
        policy=name, days=len(logs),
        seeds=(min(seeds), max(seeds)) if seeds else (0, 0),
        utility=float(np.mean(per_day)) if per_day else 0.0,
        utility_std=float(np.std(per_day)) if per_day else 0.0,
        accepted=acc, total=tot, quarter_accepted=q_acc, quarter_total=q_tot,
    )


def evaluate(policy: Policy, geography: Geography, fleet_size: int,
             instances: Sequence[RequestInstance], jobs: int = 1) -> EvalReport:
    logs = run_pool(policy, geography, fleet_size, instances, jobs)
    return report_from_logs(getattr(policy, "name", "policy"), logs, geography)


def evaluate_checkpoints(nets, geography: Geography, fleet_size: int,
                         instances: Sequence[RequestInstance], name: str = "dql",
                         jobs: int = 1) -> EvalReport:
    """Pool the decision logs of several checkpoints into one report (their mean)."""
    logs = []
    for net in nets:
        logs += run_pool(GreedyQ(net, geography, name), geography, fleet_size, instances, jobs)
    return report_from_logs(name, logs, geography)


def pareto_rows(reports: dict[float, EvalReport]) -> list[dict]:
    rows = [{"alpha": a, "r_total": r.r_total, "r_min": r.r_min, "utility": r.utility}
            for a, r in sorted(reports.items())]
    for row in rows:
        row["dominated"] = any(
            o["r_total"] >= row["r_total"] and o["r_min"] >= row["r_min"]
            and (o["r_total"] > row["r_total"] or o["r_min"] > row["r_min"])
            for o in rows
        )
    return rows


def pareto_sweep(checkpoint_sets: dict, geography: Geography, fleet_size: int,
                 instances: Sequence[RequestInstance], jobs: int = 1) -> list[dict]:
    reports = {float(a): evaluate_checkpoints(nets, geography, fleet_size, instances, f"dql({a})", jobs)
               for a, nets in checkpoint_sets.items()}
    return pareto_rows(reports)


def pareto_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "r_total", "r_min", "utility", "dominated"])
    for r in rows:
        w.writerow([f"{r['alpha']:g}", f"{r['r_total']:.6f}", f"{r['r_min']:.6f}",
                    f"{r['utility']:.6f}", int(r["dominated"])])
    return buf.getvalue()


def percent_difference(benchmark_objective: float, dql_objective: float) -> float:
    return 100.0 * (benchmark_objective - dql_objective) / dql_objective


@dataclass
class ProfileBin:
    minute: int
    count: int
    mean: float
    mean_abs: float


def reward_profile(policy: Policy, geography: Geography, fleet_size: int,
                   instances: Sequence[RequestInstance], alpha: float = 0.5) -> list[ProfileBin]:
    """Per-minute mean of the combined rate-based reward, over all days."""
    n_bins = int(np.ceil(geography.request_cutoff_minutes))
    sums = np.zeros(n_bins)
    abs_sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=int)
    spec = RewardSpec("rate_based", alpha)
    for inst in instances:
        for d in run_episode(policy, inst, geography, fleet_size, spec).decisions:
            b = min(int(d.t), n_bins - 1)
            sums[b] += d.reward
            abs_sums[b] += abs(d.reward)
            counts[b] += 1
    return [ProfileBin(m, int(counts[m]), sums[m] / counts[m], abs_sums[m] / counts[m])
            for m in range(n_bins) if counts[m]]


def profile_csv(bins: Iterable[ProfileBin]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["minute", "count", "mean_reward", "mean_abs_reward"])
    for b in bins:
        w.writerow([b.minute, b.count, repr(b.mean), repr(b.mean_abs)])
    return buf.getvalue()


def window_mean_abs(bins: Sequence[ProfileBin], start: float, end: float) -> float:
    sel = [b.mean_abs for b in bins if start <= b.minute < end]
    return float(np.mean(sel)) if sel else 0.0


@dataclass
class LongTermConfig:
    months: int = 12
    days_per_month: int = 30
    r_threshold: float = 0.70

    def __post_init__(self):
        if not 0.0 < self.r_threshold < 1.0:
            raise ValueError("r_threshold must lie in (0, 1)")
        if self.months < 1 or self.days_per_month < 1:
            raise ValueError("months and days_per_month must be positive")


@dataclass
class MonthRecord:
    month: int
    arrival_rates: list[float]  # in force during this month
    services_per_day: list[float]  # per region
    rates: list[Optional[float]]


def update_arrival_rate(lam: float, rate: Optional[float], threshold: float) -> float:
    if rate is None:
        return lam
    return max(0.0, lam + lam * (rate - threshold))


def long_term(policy: Policy, geography: Geography, fleet_size: int,
              config: LongTermConfig, seed: int = 0) -> list[MonthRecord]:
    """Month-by-month demand feedback: each region's arrival rate moves with its service rate.

    A region that received no requests in a month keeps its rate.
    """
    rates_now = list(geography.expected_counts)
    out = []
    for month in range(config.months):
        geo = geography.with_arrival_rates(rates_now)
        logs = [run_episode(policy, sample_instance(geo, seed + month * config.days_per_month + d),
                            geo, fleet_size)
                for d in range(config.days_per_month)]
        acc, tot, *_ = _tally(logs, geo)
        rates = [a / n if n else None for a, n in zip(acc, tot)]
        out.append(MonthRecord(month + 1, list(rates_now),
                               [a / config.days_per_month for a in acc], rates))
        rates_now = [update_arrival_rate(lam, r, config.r_threshold) for lam, r in zip(rates_now, rates)]
    return out


def long_term_csv(records: Sequence[MonthRecord]) -> str:
    J = len(records[0].arrival_rates) if records else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month"] + [f"lambda_{j}" for j in range(1, J + 1)]
               + [f"services_per_day_{j}" for j in range(1, J + 1)]
               + [f"rate_{j}" for j in range(1, J + 1)])
    for r in records:
        w.writerow([r.month] + [repr(v) for v in r.arrival_rates] + [repr(v) for v in r.services_per_day]
                   + ["" if v is None else repr(v) for v in r.rates])
    return buf.getvalue()


def bucket_search(geography: Geography, fleet_size: int, instances: Sequence[RequestInstance],
                  start: float = 0.05, step: float = 0.01, patience: int = 3,
                  jobs: int = 1) -> tuple[float, list[tuple[float, float]]]:
    """Raise kappa_B from ``start`` until r_min stops improving for ``patience`` steps."""
    best_kappa, best_rmin = None, -1.0
    history = []
    misses = 0
    i = 0
    while True:
        kappa = round(start + i * step, 10)
        if kappa > 1.0 + 1e-12:
            break
        r_min = evaluate(Bucket(kappa), geography, fleet_size, instances, jobs).r_min
        history.append((kappa, r_min))
        if r_min > best_rmin:
            best_kappa, best_rmin, misses = kappa, r_min, 0
        else:
            misses += 1
            if misses >= patience:
                break
        i += 1
    return best_kappa, history


def best_reserved(geography: Geography, fleet_size: int, instances: Sequence[RequestInstance],
                  alpha: float = 0.5, jobs: int = 1) -> Optional[tuple[int, EvalReport]]:
    """Best kappa_R by the weighted objective; None when the fleet is too small to split."""
    best = None
    for kappa in range(1, fleet_size):
        rep = evaluate(Reserved(kappa, fleet_size, geography.n_regions), geography, fleet_size, instances, jobs)
        if best is None or rep.objective(alpha) > best[1].objective(alpha):
            best = (kappa, rep)
    return best
