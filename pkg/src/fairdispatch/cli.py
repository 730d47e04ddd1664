"""Command-line entry point: ``fairdispatch <command> [options]``.

Every command resolves a run configuration (profile, optional JSON file,
flag overrides), writes a snapshot of it into the output directory, and puts
all of its outputs there. Exit codes: 0 ok, 2 configuration or input error,
3 runtime contract violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dqn, evaluation, features
from .approximator import DivergenceError, WeightFileError
from .config import CONFIG_SCHEMA, PROFILES, ConfigError, RunConfig
from .env import InfeasibleActionError
from .policies import Bucket, GreedyQ, Myopic, RejectAll, Reserved
from .routing import RouteViolation, trace_csv
from .world import GeographyError, RequestInstance, sample_instance, sample_pool

log = logging.getLogger("fairdispatch")

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT = 0, 2, 3


class UsageError(ValueError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file overriding the profile")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--seed", type=int, help="master seed (first instance seed for gen)")
    p.add_argument("--jobs", type=int, default=1, help="parallel evaluation workers")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairdispatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write request instances and a manifest")
    _common(p)
    p.add_argument("--count", type=int, required=True)

    p = sub.add_parser("train", help="train a Q-network")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--reward-mode", choices=["rate_based", "modified", "priority"])

    p = sub.add_parser("eval", help="evaluate a policy on the test pool or a manifest")
    _common(p)
    p.add_argument("--policy", required=True,
                   help="myopic | reject_all | bucket:K | reserved:K | dql:RUN_DIR")
    p.add_argument("--manifest", help="instance manifest written by gen")
    p.add_argument("--logs", action="store_true", help="also write per-day decision and route CSVs")

    p = sub.add_parser("sweep", help="train one network per alpha and write the Pareto table")
    _common(p)
    p.add_argument("--alphas", required=True, help="comma separated, e.g. 0,0.25,0.5")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("bucket-search", help="tune the bucket cap on the validation pool")
    _common(p)
    p.add_argument("--start", type=float, default=0.05)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=3)

    p = sub.add_parser("longterm", help="month-by-month demand feedback simulation")
    _common(p)
    p.add_argument("--policy", default="myopic")
    p.add_argument("--months", type=int, default=12)
    p.add_argument("--days-per-month", type=int, default=30)
    p.add_argument("--threshold", type=float, default=0.70)

    p = sub.add_parser("reward-profile", help="per-minute mean rate-based reward of a policy")
    _common(p)
    p.add_argument("--policy", default="myopic")
    p.add_argument("--days", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.5)

    p = sub.add_parser("schema", help="print the run-configuration JSON schema")
    p.add_argument("--out", help="write to this file instead of stdout")
    return parser


def _resolve(args) -> RunConfig:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output_dir"] = args.out
    train = {}
    for flag, key in (("alpha", "alpha"), ("epochs", "epochs"), ("reward_mode", "reward_mode")):
        if getattr(args, flag, None) is not None:
            train[key] = getattr(args, flag)
    if train:
        over["train"] = train
    return RunConfig.resolve(args.profile, args.config, over)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.snapshot())
    return out


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", name).strip("_")


def make_policy(spec: str, cfg: RunConfig):
    geo, M = cfg.geography(), cfg.fleet_size
    kind, _, arg = spec.partition(":")
    if kind == "myopic" and not arg:
        return [Myopic()]
    if kind == "reject_all" and not arg:
        return [RejectAll()]
    try:
        if kind == "bucket":
            return [Bucket(float(arg))]
        if kind == "reserved":
            return [Reserved(int(arg), M, geo.n_regions)]
    except ValueError as e:
        raise UsageError(f"bad policy {spec!r}: {e}") from e
    if kind == "dql" and arg:
        ckpts = dqn.load_checkpoints(arg, features.feature_dim(geo.n_regions, M), M + 1)
        if not ckpts:
            raise UsageError(f"no checkpoints in {arg}")
        return [GreedyQ(net, geo, f"dql@{epoch}") for epoch, net in ckpts]
    raise UsageError(f"unknown policy {spec!r}")


def _policy_name(spec: str, policies) -> str:
    if spec.startswith("dql:"):
        return "dql"
    return policies[0].name


def read_manifest(path: str | Path) -> list[RequestInstance]:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return [RequestInstance.load(path.parent / r["file"], int(r["seed"])) for r in rows]
    except (OSError, KeyError, ValueError) as e:
        raise UsageError(f"cannot read manifest {path}: {e}") from e


def cmd_gen(args, cfg: RunConfig) -> int:
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    out = _out_dir(cfg)
    geo = cfg.geography()
    first = args.seed if args.seed is not None else cfg.pools["test_seed"]
    inst_dir = out / "instances"
    inst_dir.mkdir(exist_ok=True)
    rows = []
    for seed in range(first, first + args.count):
        name = f"instances/inst_{seed}.csv"
        sample_instance(geo, seed).save(out / name)
        rows.append((name, seed))
    with open(out / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["file", "seed"])
        w.writerows(rows)
    print(f"wrote {len(rows)} instances to {inst_dir}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    geo, M = cfg.geography(), cfg.fleet_size
    tc = cfg.train_config()
    geo.save(out / "geography.json")
    (out / "feature_schema.json").write_text(features.schema_json(geo, M))
    res = dqn.train(tc, geo, M, cfg.pool("train"), cfg.pool("validation"), run_dir=out)
    print(f"trained {tc.epochs} epochs ({res.steps} steps); "
          f"checkpoints {[e for e, _ in res.checkpoints]} in {out}")
    return EXIT_OK


def _test_pool(args, cfg: RunConfig):
    return read_manifest(args.manifest) if getattr(args, "manifest", None) else cfg.pool("test")


def cmd_eval(args, cfg: RunConfig) -> int:
    policies = make_policy(args.policy, cfg)
    instances = _test_pool(args, cfg)
    out = _out_dir(cfg)
    geo, M = cfg.geography(), cfg.fleet_size
    name = _policy_name(args.policy, policies)
    logs = []
    for pol in policies:
        logs += evaluation.run_pool(pol, geo, M, instances, args.jobs)
    report = evaluation.report_from_logs(name, logs, geo)
    stem = f"eval_{_slug(name)}"
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}.csv").write_text(report.to_csv())
    if args.logs:
        log_dir = out / f"{stem}_logs"
        log_dir.mkdir(exist_ok=True)
        for i, ep in enumerate(logs):
            tag = f"{i // max(1, len(instances))}_{ep.seed}" if len(policies) > 1 else str(ep.seed)
            (log_dir / f"decisions_{tag}.csv").write_text(ep.to_csv())
            (log_dir / f"routes_{tag}.csv").write_text(trace_csv(ep.fleet))
    s = report.summary()
    print(f"{name}: utility {s['utility']:.3f}/day, r_total {s['r_total']:.4f}, "
          f"r_min {s['r_min']:.4f} over {report.days} days -> {out / stem}.json")
    return EXIT_OK


def _alphas(text: str) -> list[float]:
    try:
        vals = [float(a) for a in text.split(",") if a.strip()]
    except ValueError as e:
        raise UsageError(f"bad --alphas {text!r}") from e
    if not vals or any(not 0.0 <= a <= 1.0 for a in vals):
        raise UsageError("--alphas must list values in [0, 1]")
    return vals


def cmd_sweep(args, cfg: RunConfig) -> int:
    alphas = _alphas(args.alphas)
    out = _out_dir(cfg)
    geo, M = cfg.geography(), cfg.fleet_size
    train_pool, val_pool, test_pool = cfg.pool("train"), cfg.pool("validation"), cfg.pool("test")
    sets = {}
    for a in alphas:
        run = out / f"alpha_{a:g}"
        res = dqn.train(cfg.train_config(alpha=a), geo, M, train_pool, val_pool, run_dir=run)
        sets[a] = res.last_nets
    rows = evaluation.pareto_sweep(sets, geo, M, test_pool, args.jobs)
    (out / "pareto.csv").write_text(evaluation.pareto_csv(rows))
    print(evaluation.pareto_csv(rows), end="")
    return EXIT_OK


def cmd_bucket_search(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    geo, M = cfg.geography(), cfg.fleet_size
    kappa, hist = evaluation.bucket_search(geo, M, cfg.pool("validation"), args.start, args.step,
                                           args.patience, args.jobs)
    with open(out / "bucket_search.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kappa", "r_min"])
        w.writerows([(f"{k:.2f}", repr(r)) for k, r in hist])
    (out / "bucket_best.json").write_text(json.dumps({"kappa": kappa}) + "\n")
    print(f"best kappa_B = {kappa:.2f}")
    return EXIT_OK


def cmd_longterm(args, cfg: RunConfig) -> int:
    policies = make_policy(args.policy, cfg)
    try:
        lt = evaluation.LongTermConfig(args.months, args.days_per_month, args.threshold)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = _out_dir(cfg)
    records = evaluation.long_term(policies[-1], cfg.geography(), cfg.fleet_size, lt, cfg.pools["eval_seed"])
    (out / "longterm.csv").write_text(evaluation.long_term_csv(records))
    last = records[-1]
    print(f"month {last.month}: arrival rates {[round(v, 2) for v in last.arrival_rates]}")
    return EXIT_OK


def cmd_reward_profile(args, cfg: RunConfig) -> int:
    if args.days < 1:
        raise UsageError("--days must be positive")
    policies = make_policy(args.policy, cfg)
    out = _out_dir(cfg)
    geo = cfg.geography()
    days = sample_pool(geo, cfg.pools["eval_seed"], args.days)
    bins = evaluation.reward_profile(policies[-1], geo, cfg.fleet_size, days, args.alpha)
    (out / "reward_profile.csv").write_text(evaluation.profile_csv(bins))
    first = evaluation.window_mean_abs(bins, 0, 30)
    end = geo.request_cutoff_minutes
    last = evaluation.window_mean_abs(bins, end - 60, end)
    print(f"mean |reward|: first half hour {first:.5f}, final hour {last:.5f}")
    return EXIT_OK


def cmd_schema(args) -> int:
    text = json.dumps(CONFIG_SCHEMA, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bucket-search": cmd_bucket_search,
    "longterm": cmd_longterm,
    "reward-profile": cmd_reward_profile,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        return cmd_schema(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError, GeographyError, WeightFileError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleActionError, RouteViolation, DivergenceError) as e:
        print(f"contract violation: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
