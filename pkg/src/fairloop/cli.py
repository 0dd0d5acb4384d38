"""Command line entry point: ``fairloop <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .catalog import Catalog, build_catalog, read_provider_map, write_provider_map
from .config import ConfigError, config_from_dict, load_config
from .oracle import (EnumerationBudgetError, OfflineInstance, brute_force_optimum, realized_objective,
                     regret, solve_offline_flow, solve_offline_milp, solve_offline_optimum)
from .sim import POLICY_IDS, ExperimentConfig, run_experiment

SOLVERS = {"enum": solve_offline_optimum, "brute": brute_force_optimum,
           "flow": solve_offline_flow, "milp": solve_offline_milp}
DEFAULT_LAMS = (1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0)


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list: {text!r}") from None
    return parse


def _base_config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else config_from_dict({})


def _run(cfg: ExperimentConfig):
    return run_experiment(cfg)


def _run_many(configs, jobs: int):
    if jobs <= 1 or len(configs) <= 1:
        return [run_experiment(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run, configs))


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.policy is not None:
        cfg = replace(cfg, policy=args.policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_experiment(cfg)
    paths = dict(episodes="episodes.jsonl", summary="summary.csv", manifest="manifest.json")
    io.write_jsonl(out / paths["episodes"], io.episode_rows(trace, cfg.seed, paths["manifest"]))
    io.write_summary_csv(out / paths["summary"], [io.summary_row(trace)])
    manifest = io.RunManifest(cfg.to_dict(), [cfg.seed], outputs=paths, timings_ms={str(cfg.seed): trace.wall_ms})
    io.write_manifest(out / paths["manifest"], manifest)
    s = trace.summary
    print(f"{cfg.policy} seed={cfg.seed}: CTR@K={s.ctr_at_k:.4f} MMF@K={s.mmf_at_k:.4f} "
          f"r@K={s.r_lambda_at_k:.4f} ({trace.wall_ms:.0f} ms) -> {out}")
    return 0


def load_instance(path) -> OfflineInstance:
    """JSON with ``scores`` (T x n), ``provider_of``, ``K``, ``lam`` and either ``gamma`` or ``richness``."""
    data = json.loads(Path(path).read_text())
    missing = [k for k in ("scores", "provider_of", "K", "lam") if k not in data]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")
    scores = np.asarray(data["scores"], dtype=float)
    T = scores.shape[0]
    if "gamma" in data:
        cat = Catalog(np.asarray(data["provider_of"]), np.asarray(data["gamma"], dtype=float), int(data["K"]), T)
    else:
        cat = build_catalog(data["provider_of"], int(data["K"]), T, data.get("richness"))
    return OfflineInstance(scores, cat, float(data["lam"]))


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    res = SOLVERS[args.solver](inst)
    if not res.feasible:
        print("R_OPT = infeasible (no decision sequence meets the exposure budgets)")
        return 1
    print(f"R_OPT = {res.value:.12g}")
    print("decisions = " + json.dumps([[int(i) for i in d] for d in res.decisions]))
    if args.trace:
        data = json.loads(Path(args.trace).read_text())
        decisions = data["decisions"] if isinstance(data, dict) else data
        realized = realized_objective(inst, decisions, enforce_budget=not args.no_budget)
        print(f"realized = {realized:.12g}")
        print(f"regret = {regret(realized, res.value):.12g}")
    return 0


def cmd_ablate(args) -> int:
    base = _base_config(args)
    configs = [replace(base, policy=p, seed=s) for p in args.policies for s in args.seeds]
    for c in configs:
        errs = c.validate()
        if errs:
            raise ConfigError(errs)
    traces = _run_many(configs, args.jobs)
    io.write_summary_csv(args.out, [io.summary_row(t) for t in traces])
    for p in args.policies:
        rows = [t.summary for t in traces if t.config.policy == p]
        print(f"{p:16s} CTR@K={np.mean([r.ctr_at_k for r in rows]):.4f} "
              f"MMF@K={np.mean([r.mmf_at_k for r in rows]):.4f} "
              f"r@K={np.mean([r.r_lambda_at_k for r in rows]):.4f}")
    return 0


def cmd_sweep(args) -> int:
    base = _base_config(args)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    if args.policy is not None:
        base = replace(base, policy=args.policy)
    configs = [replace(base, lam=float(lam)) for lam in args.lams]
    traces = _run_many(configs, args.jobs)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "seed", "lambda", "ctr", "mmf"])
        for t in traces:
            w.writerow([t.config.policy, t.config.seed, repr(t.config.lam),
                        repr(t.summary.ctr_at_k), repr(t.summary.mmf_at_k)])
    print(f"{len(traces)} lambda values -> {args.out}")
    return 0


def cmd_ingest(args) -> int:
    table = io.load_interactions(args.interactions)
    pmap = read_provider_map(args.providers)
    res = io.preprocess(table, pmap, args.min_degree)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_provider_map(out / "provider_map.csv", res.provider_of, res.item_ids, res.provider_ids)
    io.write_split(out / "train.csv", res.train, res.user_ids, res.item_ids)
    io.write_split(out / "test.csv", res.test, res.user_ids, res.item_ids)
    (out / "stats.json").write_text(json.dumps(res.stats, indent=2, sort_keys=True) + "\n")
    st = res.stats
    print(f"kept {st['kept_rows']}/{st['raw_rows']} rows: {st['n_users']} users, {st['n_items']} items, "
          f"{st['n_providers']} providers; train {st['train_rows']}, test {st['test_rows']} -> {out}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairloop", description="Long-term provider-fair re-ranking under feedback loops.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment from a config file")
    p.add_argument("--config", help="flat YAML config (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", choices=POLICY_IDS)
    p.add_argument("--out", default="runs/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="solve a tiny offline instance exactly")
    p.add_argument("--instance", required=True, help="instance JSON")
    p.add_argument("--trace", help="JSON list of per-step item lists to score against the optimum")
    p.add_argument("--solver", choices=sorted(SOLVERS), default="enum")
    p.add_argument("--no-budget", action="store_true", help="do not treat budget overshoot as -inf")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("ablate", help="run a policy x seed grid")
    p.add_argument("--config")
    p.add_argument("--policies", type=_csv_list(str), default=list(POLICY_IDS[:5]))
    p.add_argument("--seeds", type=_csv_list(int), default=list(range(5)))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="ablate.csv")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="trade-off sweep over lambda")
    p.add_argument("--config")
    p.add_argument("--lams", type=_csv_list(float), default=list(DEFAULT_LAMS))
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", choices=POLICY_IDS)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ingest", help="filter and split an interaction log")
    p.add_argument("--interactions", required=True, help="CSV user_id,item_id,rating,timestamp")
    p.add_argument("--providers", required=True, help="CSV item_id,provider_id")
    p.add_argument("--min-degree", type=int, default=5)
    p.add_argument("--out", default="dataset")
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "policies", None) is not None:
        unknown = [p for p in args.policies if p not in POLICY_IDS]
        if unknown:
            parser.error(f"unknown policies {unknown}; choose from {', '.join(POLICY_IDS)}")
    start = time.perf_counter()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EnumerationBudgetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if args.command != "oracle":
            print(f"done in {time.perf_counter() - start:.1f} s", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
