"""Deep Q-learning over the reduced action set (reject or one of M vehicles)."""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import approximator, env
from .approximator import MLP, Adam, DivergenceError
from .env import RewardSpec
from .evaluation import evaluate
from .features import feature_dim, featurize
from .policies import GreedyQ, greedy_action
from .world import Geography, RequestInstance

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20000
    alpha: float = 0.5
    reward_mode: str = "modified"
    priority: Optional[tuple[float, ...]] = None
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_anchor: float = 0.9  # fraction of training at which epsilon_end is reached
    buffer_capacity: int = 50000
    batch_size: int = 32
    target_sync: int = 1000
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (50, 50)
    checkpoint_every: Optional[int] = None  # default: epochs // 100
    keep_checkpoints: int = 10
    eval_days: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.priority is not None:
            self.priority = tuple(self.priority)
        self.hidden = tuple(self.hidden)
        for name in ("epochs", "buffer_capacity", "batch_size", "target_sync", "keep_checkpoints"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 < epsilon_end <= epsilon_start <= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be positive")
        self.reward_spec  # validates mode/alpha/priority

    @property
    def reward_spec(self) -> RewardSpec:
        return RewardSpec(self.reward_mode, self.alpha, self.priority)

    @property
    def checkpoint_period(self) -> int:
        return self.checkpoint_every or max(1, self.epochs // 100)


def epsilon(epoch: int, config: TrainConfig) -> float:
    """Exponential decay from epsilon_start, reaching epsilon_end at the anchor fraction."""
    rate = math.log(config.epsilon_start / config.epsilon_end) / (config.epsilon_anchor * config.epochs)
    return max(config.epsilon_end, config.epsilon_start * math.exp(-epoch * rate))


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int, dim: int, n_actions: int):
        self.capacity = capacity
        self.x = np.zeros((capacity, dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.x_next = np.zeros((capacity, dim))
        self.next_feasible = np.zeros((capacity, n_actions), dtype=bool)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def add(self, x, action, reward, x_next=None, next_feasible=None) -> None:
        i = self._head
        self.x[i] = x
        self.action[i] = action
        self.reward[i] = reward
        if x_next is None:
            self.terminal[i] = True
            self.x_next[i] = 0.0
            self.next_feasible[i] = False
        else:
            if not next_feasible[0]:
                raise ValueError("reject must always be feasible in a non-terminal state")
            self.terminal[i] = False
            self.x_next[i] = x_next
            self.next_feasible[i] = next_feasible
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        """Uniform indices, without replacement within the batch."""
        return rng.choice(self.size, batch_size, replace=False)


def q_targets(target_net: MLP, buf: ReplayBuffer, idx) -> np.ndarray:
    """Reward plus the best target-network value over the next state's feasible actions."""
    q_next = target_net.forward(buf.x_next[idx])
    best = np.where(buf.next_feasible[idx], q_next, -np.inf).max(axis=1)
    best = np.where(buf.terminal[idx], 0.0, best)
    return buf.reward[idx] + best


@dataclass
class TrainResult:
    checkpoints: list[tuple[int, MLP]]
    log_rows: list[dict] = field(default_factory=list)
    steps: int = 0

    @property
    def last_nets(self) -> list[MLP]:
        return [net for _, net in self.checkpoints]


LOG_COLUMNS = ["epoch", "epsilon", "loss", "eval_r_total", "eval_r_min"]


def train(
    config: TrainConfig,
    geography: Geography,
    fleet_size: int,
    pool: Sequence[RequestInstance],
    eval_pool: Sequence[RequestInstance] = (),
    run_dir: Optional[str | Path] = None,
) -> TrainResult:
    if not pool:
        raise ValueError("training pool is empty")
    dim = feature_dim(geography.n_regions, fleet_size)
    n_actions = fleet_size + 1
    spec = config.reward_spec
    rng = random.Random(config.seed)
    batch_rng = np.random.default_rng(config.seed)
    net = MLP([dim, *config.hidden, n_actions], seed=config.seed)
    target = net.copy()
    opt = Adam(net.params.size, lr=config.learning_rate)
    buf = ReplayBuffer(config.buffer_capacity, dim, n_actions)
    eval_pool = list(eval_pool)[:config.eval_days] if config.eval_days else []

    out = Path(run_dir) if run_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for stale in out.glob("ckpt_*.json"):  # a run directory holds one run
            stale.unlink()
    result = TrainResult([])
    steps = 0
    period = config.checkpoint_period
    for epoch in range(1, config.epochs + 1):
        eps = epsilon(epoch - 1, config)
        inst = pool[rng.randrange(len(pool))]
        state = env.reset(inst, geography, fleet_size)
        losses = []
        if not state.terminal:
            x = featurize(state, geography)
        while not state.terminal:
            flags = state.flags
            if rng.random() < eps:
                action = rng.choice([0] + [m for m, f in enumerate(flags, start=1) if f])
            else:
                action = greedy_action(net.forward(x), flags)
            nxt, r = env.step(state, action, inst, geography, spec)
            if nxt.terminal:
                buf.add(x, action, r)
            else:
                x_next = featurize(nxt, geography)
                buf.add(x, action, r, x_next, (1,) + nxt.flags)
            steps += 1
            if len(buf) >= config.batch_size:
                idx = buf.sample(batch_rng, config.batch_size)
                y = q_targets(target, buf, idx)
                try:
                    losses.append(approximator.train_arrays(net, opt, buf.x[idx], buf.action[idx], y))
                except DivergenceError as e:
                    raise DivergenceError(f"epoch {epoch}, step {steps}: {e}") from e
            if steps % config.target_sync == 0:
                target.params[:] = net.params
            if not nxt.terminal:
                x = x_next
            state = nxt

        row = {"epoch": epoch, "epsilon": eps, "loss": float(np.mean(losses)) if losses else None,
               "eval_r_total": None, "eval_r_min": None}
        if epoch % period == 0 or epoch == config.epochs:
            snap = net.copy()
            result.checkpoints.append((epoch, snap))
            if eval_pool:
                rep = evaluate(GreedyQ(snap, geography), geography, fleet_size, eval_pool)
                row["eval_r_total"], row["eval_r_min"] = rep.r_total, rep.r_min
                log.info("epoch %d eps %.3f r_total %.3f r_min %.3f", epoch, eps, rep.r_total, rep.r_min)
            if out is not None:
                approximator.save(snap, out / f"ckpt_{epoch}.json")
            while len(result.checkpoints) > config.keep_checkpoints:
                old_epoch, _ = result.checkpoints.pop(0)
                if out is not None:
                    (out / f"ckpt_{old_epoch}.json").unlink(missing_ok=True)
        result.log_rows.append(row)
    result.steps = steps
    if out is not None:
        write_train_log(out / "train_log.csv", result.log_rows)
    return result


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_train_log(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([_cell(row[c]) for c in LOG_COLUMNS])


def load_checkpoints(run_dir: str | Path, input_dim: Optional[int] = None,
                     output_dim: Optional[int] = None) -> list[tuple[int, MLP]]:
    paths = sorted(Path(run_dir).glob("ckpt_*.json"), key=lambda p: int(p.stem.split("_")[1]))
    return [(int(p.stem.split("_")[1]), approximator.load(p, input_dim, output_dim)) for p in paths]


def config_json(config: TrainConfig) -> str:
    return json.dumps(asdict(config), indent=2, sort_keys=True) + "\n"
