"""Command line driver: run experiments end to end from config files.

Subcommands:
  forecast   expected generation profiles, one CSV per RG user
  schedule   social schedule with the selected solver
  bargain    cost allocation, solo bounds, profit intervals, gamma sweep
  region     Monte Carlo outcome-region probabilities
  report     the whole pipeline in one deterministic report

Users are numbered 1..r in model order everywhere a command talks
about them (--honest, gamma sweeps, report rows). Exit codes: 0 ok,
2 bad input, 3 solver trouble, 4 the bargain fell through. Set
GRIDBARGAIN_LOG=info (or debug) for progress on stderr.

Reports are reproducible: identical config and seed give byte-identical
JSON; wall-clock timings go to a separate timings.json.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import bargaining, codes, consensus, io, rg_forecast, scheduling
from .errors import (
    BargainingFailed,
    GridBargainError,
    Infeasible,
    InvariantViolation,
    NoConvergence,
    SolverStall,
)

log = logging.getLogger("gridbargain")


def _parse_floats(text, flag):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise InvariantViolation([f"{flag}: expected comma-separated numbers, got {text!r}"])


def _parse_honest(text):
    if text.strip() == "":
        return ()
    try:
        idx = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise InvariantViolation([f"--honest: expected comma-separated integers, got {text!r}"])
    if any(i < 1 for i in idx):
        raise InvariantViolation(["--honest uses 1-based user positions"])
    return idx


def _codes_config(overrides):
    try:
        return codes.CodesConfig(**overrides)
    except TypeError as exc:
        raise InvariantViolation([f"codes overrides: {exc}"])


def _out_dir(args, config):
    out = args.out or (config.out_dir if config else None) or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load_bundle(args):
    """Experiment config plus model, pools and forecast profiles."""
    config = io.load_experiment(args.config)
    if args.seed is not None:
        config = io.ExperimentConfig(**{
            **{f: getattr(config, f) for f in config.__dataclass_fields__},
            "seed": int(args.seed), "mc_seed": int(args.seed),
        })
    model = io.load_model(config.model_path)
    pools = io.build_pools(config)
    rg = None
    if pools:
        if config.forecast is None:
            raise InvariantViolation(
                ["experiment lists scenario pools but no forecast vectors"])
        rg = rg_forecast.forecast_all(pools, config.forecast)
    return config, model, pools, rg


def _schedule(model, rg, config, solver, seed):
    """Run one solver; returns (j_soc, report fragment, codes run or None)."""
    if solver == "centralized":
        t0 = time.perf_counter()
        outcome = scheduling.solve_social(model, rg)
        elapsed = time.perf_counter() - t0
        frag = {
            "solver": "centralized",
            "j_soc": outcome.social_cost,
            "trading_cost": outcome.trading_cost,
            "bdc_costs": outcome.bdc_costs,
            "outer_iterations": outcome.outer_iterations,
        }
        return outcome, frag, None, elapsed
    cfg = _codes_config(config.codes_overrides if config else {})
    t0 = time.perf_counter()
    run = codes.run_codes(model, rg, config=cfg, seed=seed)
    elapsed = time.perf_counter() - t0
    frag = {
        "solver": "distributed",
        "j_soc": run.outcome.social_cost,
        "trading_cost": run.outcome.trading_cost,
        "bdc_costs": run.outcome.bdc_costs,
        "iterations": run.iterations,
        "converged": run.converged,
        "certified_gap": run.gap,
    }
    return run.outcome, frag, run, elapsed


def _write_decisions(out, model, outcome):
    T = int(model.horizon.steps)
    t = np.arange(T)
    io.write_csv(os.path.join(out, "schedule_grid.csv"),
                 np.column_stack([t, outcome.decision.grid_buy,
                                  outcome.decision.grid_sell]),
                 header="t,grid_buy_kw,grid_sell_kw")
    for uid, dis in outcome.decision.discharge.items():
        io.write_csv(os.path.join(out, f"schedule_{uid}.csv"),
                     np.column_stack([t, dis, outcome.decision.charge[uid],
                                      outcome.soc[uid]]),
                     header="t,discharge_kw,charge_kw,soc_kwh")


def _write_forecast(out, model, rg):
    T = int(model.horizon.steps)
    t = np.arange(T)
    index = {}
    for uid in sorted(rg.profiles):
        name = f"forecast_{uid}.csv"
        prof = rg.profiles[uid]
        io.write_csv(os.path.join(out, name),
                     np.column_stack([t, prof]), header="t,p_kw")
        index[uid] = {"csv": name, "energy_kwh": float(prof.sum()) * model.horizon.dt}
    return index


def cmd_forecast(args):
    config, model, pools, rg = _load_bundle(args)
    if rg is None:
        raise InvariantViolation(["experiment has no scenario pools to forecast from"])
    out = _out_dir(args, config)
    index = _write_forecast(out, model, rg)
    io.write_json(os.path.join(out, "forecast.json"), {
        "config": os.path.basename(config.path),
        "seed": config.seed,
        "users": index,
    })
    log.info("forecast written for %d users to %s", len(index), out)
    return 0


def cmd_schedule(args):
    config, model, pools, rg = _load_bundle(args)
    solver = args.solver or config.solver
    out = _out_dir(args, config)
    outcome, frag, run, elapsed = _schedule(model, rg, config, solver, config.seed)
    timings = {"schedule_s": elapsed}
    if args.verify_oracle:
        other = "centralized" if solver == "distributed" else "distributed"
        _, frag2, run2, elapsed2 = _schedule(model, rg, config, other, config.seed)
        frag["oracle_solver"] = other
        frag["oracle_j_soc"] = frag2["j_soc"]
        frag["cost_gap"] = frag["j_soc"] - frag2["j_soc"]
        timings["oracle_s"] = elapsed2
        if run2 is not None and not run2.converged:
            run = run2 if run is None or run.converged else run
    report = {"config": os.path.basename(config.path), "seed": config.seed, **frag}
    io.write_json(os.path.join(out, "schedule.json"), report)
    io.write_json(os.path.join(out, "timings.json"), timings)
    if args.full_decisions:
        _write_decisions(out, model, outcome)
    log.info("schedule done: J_soc = %.4f cents (%s)", frag["j_soc"], solver)
    if run is not None and not run.converged:
        log.error("distributed solver left a gap of %.4f cents", run.gap)
        return 3
    return 0


def _bargain_inputs(args):
    """D vector and J_soc, either from flags or from the full pipeline."""
    if args.d_vector is not None:
        if args.jsoc is None:
            raise InvariantViolation(["--d-vector needs --jsoc"])
        d = _parse_floats(args.d_vector, "--d-vector")
        return None, d, float(args.jsoc), None, {}
    if args.config is None:
        raise InvariantViolation(["give an experiment config or --d-vector/--jsoc"])
    config, model, pools, rg = _load_bundle(args)
    solver = getattr(args, "solver", None) or config.solver
    outcome, frag, run, elapsed = _schedule(model, rg, config, solver, config.seed)
    if run is not None and not run.converged:
        raise NoConvergence(
            f"distributed schedule left a gap of {run.gap:.4f} cents")
    individual = scheduling.individual_costs(model, rg)
    d = np.array([individual[u.id].cost for u in model.users])
    return config, d, float(outcome.social_cost), model, {
        "schedule": frag, "timings": {"schedule_s": elapsed},
    }


def _gamma_sweep_csv(out, d, j_soc, sweep):
    """Lattice of gamma vectors -> success flag and discount, as CSV."""
    users = [int(i) for i in sweep["users"]]
    r = d.shape[0]
    if any(i < 1 or i > r for i in users):
        raise InvariantViolation([f"gamma_sweep.users must be within 1..{r}"])
    num = int(sweep["num"])
    high = float(sweep.get("max", 1.0))
    axes = [np.linspace(0.0, high, num)] * len(users)
    grid = np.meshgrid(*axes, indexing="ij")
    rows = []
    for combo in zip(*(g.ravel() for g in grid)):
        gamma = np.zeros(r)
        for pos, val in zip(users, combo):
            gamma[pos - 1] = val
        res = bargaining.adjusted_allocation(d, gamma, j_soc)
        rows.append(list(combo) + [float(res.success), res.epsilon])
    header = ",".join([f"gamma_{i}" for i in users] + ["success", "epsilon"])
    io.write_csv(os.path.join(out, "gamma_sweep.csv"), np.array(rows), header=header)
    return len(rows)


def cmd_bargain(args):
    config, d, j_soc, model, extra = _bargain_inputs(args)
    r = d.shape[0]
    gamma = None
    if args.gamma is not None:
        gamma = _parse_floats(args.gamma, "--gamma")
    elif config is not None and config.gamma is not None:
        gamma = config.gamma
    if gamma is not None and gamma.shape[0] != r:
        raise InvariantViolation(
            [f"gamma has {gamma.shape[0]} entries but there are {r} users"])

    honest = _parse_honest(args.honest) if args.honest is not None else (
        config.mc_honest if config else ())
    samples = args.samples if args.samples is not None else (
        config.mc_samples if config else 0)
    seed = args.seed if args.seed is not None else (config.mc_seed if config else 0)

    out = _out_dir(args, config)
    ideal = bargaining.allocate(d, j_soc)
    t0 = time.perf_counter()
    resilience = bargaining.resilience_report(
        d, j_soc, gamma, honest=[i - 1 for i in honest],
        mc_samples=int(samples), seed=int(seed))
    mc_elapsed = time.perf_counter() - t0

    report = {
        "config": os.path.basename(config.path) if config else None,
        "d": d,
        "j_soc": j_soc,
        "ideal": ideal,
        "gamma": gamma if gamma is not None else np.zeros(r),
        "resilience": resilience,
        "honest": list(honest),
        "mc_samples": int(samples),
        "mc_seed": int(seed),
    }
    if "schedule" in extra:
        report["schedule"] = extra["schedule"]
    if config is not None and config.gamma_sweep is not None:
        report["gamma_sweep_rows"] = _gamma_sweep_csv(out, d, j_soc, config.gamma_sweep)
    io.write_json(os.path.join(out, "bargain.json"), report)
    timings = dict(extra.get("timings", {}), monte_carlo_s=mc_elapsed)
    io.write_json(os.path.join(out, "timings.json"), timings)
    log.info("bargain: eps0 = %.4f, declared eps = %.4f, success = %s",
             resilience["eps0"], resilience["epsilon"], resilience["success"])
    if not resilience["success"]:
        log.error("declared selfishness exceeds the surplus budget")
        return 4
    return 0


def cmd_region(args):
    config, d, j_soc, model, extra = _bargain_inputs(args)
    r = d.shape[0]
    honest = _parse_honest(args.honest) if args.honest is not None else (
        config.mc_honest if config else ())
    if any(i > r for i in honest):
        raise InvariantViolation([f"--honest positions must be within 1..{r}"])
    samples = args.samples if args.samples is not None else (
        (config.mc_samples if config else 0) or 1_000_000)
    seed = args.seed if args.seed is not None else (config.mc_seed if config else 0)
    eps0 = (float(d.sum()) - j_soc) / r

    out = _out_dir(args, config)
    t0 = time.perf_counter()
    regions = bargaining.region_probabilities(
        d, eps0, [i - 1 for i in honest], int(samples), seed=int(seed))
    elapsed = time.perf_counter() - t0
    io.write_json(os.path.join(out, "region.json"), {
        "config": os.path.basename(config.path) if config else None,
        "d": d,
        "j_soc": j_soc,
        "eps0": eps0,
        "honest": list(honest),
        "n_samples": int(samples),
        "seed": int(seed),
        "regions": regions,
    })
    io.write_json(os.path.join(out, "timings.json"), {"monte_carlo_s": elapsed})
    for name in bargaining.PREDICATES:
        log.info("%s: %.4f%%", name, 100.0 * regions[name].probability)
    return 0


def cmd_report(args):
    config, model, pools, rg = _load_bundle(args)
    solver = args.solver or config.solver
    out = _out_dir(args, config)
    timings = {}

    forecast_index = None
    if rg is not None:
        forecast_index = _write_forecast(out, model, rg)

    outcome, frag, run, elapsed = _schedule(model, rg, config, solver, config.seed)
    timings["schedule_s"] = elapsed
    if run is not None and not run.converged:
        log.error("distributed solver left a gap of %.4f cents", run.gap)
        return 3

    t0 = time.perf_counter()
    individual = scheduling.individual_costs(model, rg)
    timings["individual_s"] = time.perf_counter() - t0
    d = np.array([individual[u.id].cost for u in model.users])
    j_soc = float(outcome.social_cost)

    ideal = bargaining.allocate(d, j_soc)
    gamma = config.gamma if config.gamma is not None else np.zeros(model.n_users)
    t0 = time.perf_counter()
    resilience = bargaining.resilience_report(
        d, j_soc, gamma, honest=[i - 1 for i in config.mc_honest],
        mc_samples=config.mc_samples, seed=config.mc_seed)
    timings["bargain_s"] = time.perf_counter() - t0

    report = {
        "config": os.path.basename(config.path),
        "seed": config.seed,
        "users": [u.id for u in model.users],
        "forecast": forecast_index,
        "schedule": frag,
        "d": d,
        "ideal": ideal,
        "gamma": gamma,
        "resilience": resilience,
        "mc": {"samples": config.mc_samples, "honest": list(config.mc_honest),
               "seed": config.mc_seed},
    }

    # The distributed pipeline also settles the allocation by averaging
    # consensus on the communication graph: each active user starts
    # from its declared cost net of its own degradation bill, the grid
    # node from the negated trading cost, and the network average
    # recovers the common discount without anyone pooling the raw costs.
    if solver == "distributed":
        n = model.n_users + 1
        W = consensus.metropolis_weights(model.graph, n)
        s = bargaining.selfish_cost(d, gamma)
        x0 = np.concatenate([
            [s[k] - outcome.bdc_costs.get(u.id, 0.0)
             for k, u in enumerate(model.users)],
            [-outcome.trading_cost],
        ])
        t0 = time.perf_counter()
        cons = consensus.run_average_consensus(
            x0, W, **config.consensus_overrides)
        timings["consensus_s"] = time.perf_counter() - t0
        j_cons = consensus.allocate_from_consensus(
            s, cons.final[:model.n_users], model.n_users)
        report["consensus"] = {
            "iterations": cons.iterations,
            "j": j_cons,
            "max_dev_from_direct": float(np.max(np.abs(
                j_cons - bargaining.allocate(s, j_soc).j))),
        }

    if args.full_decisions:
        _write_decisions(out, model, outcome)
    io.write_json(os.path.join(out, "report.json"), report)
    io.write_json(os.path.join(out, "timings.json"), timings)
    log.info("report written to %s", os.path.join(out, "report.json"))
    if not resilience["success"]:
        return 4
    return 0


def _build_parser():
    p = argparse.ArgumentParser(
        prog="gridbargain",
        description="Cooperative microgrid scheduling and bargaining experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("config", help="experiment YAML")
        else:
            sp.add_argument("config", nargs="?", default=None,
                            help="experiment YAML (optional with --d-vector)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")

    sp = sub.add_parser("forecast", help="write expected RG profiles per user")
    common(sp)
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("schedule", help="solve the day-ahead social schedule")
    common(sp)
    sp.add_argument("--solver", choices=io.SOLVERS, default=None)
    sp.add_argument("--verify-oracle", action="store_true",
                    help="also run the other solver and report the cost gap")
    sp.add_argument("--full-decisions", action="store_true",
                    help="write per-agent schedule CSVs")
    sp.set_defaults(func=cmd_schedule)

    sp = sub.add_parser("bargain", help="allocate costs and probe selfishness")
    common(sp, config_required=False)
    sp.add_argument("--solver", choices=io.SOLVERS, default=None)
    sp.add_argument("--d-vector", default=None,
                    help="comma-separated ideal costs (skips the schedule)")
    sp.add_argument("--jsoc", type=float, default=None,
                    help="social cost to pair with --d-vector")
    sp.add_argument("--gamma", default=None,
                    help="comma-separated selfishness coefficients")
    sp.add_argument("--samples", type=int, default=None,
                    help="Monte Carlo samples (0 skips the region study)")
    sp.add_argument("--honest", default=None,
                    help="comma-separated 1-based positions kept honest")
    sp.set_defaults(func=cmd_bargain)

    sp = sub.add_parser("region", help="Monte Carlo outcome-region probabilities")
    common(sp, config_required=False)
    sp.add_argument("--solver", choices=io.SOLVERS, default=None)
    sp.add_argument("--d-vector", default=None)
    sp.add_argument("--jsoc", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--honest", default=None)
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("report", help="full pipeline, one report")
    common(sp)
    sp.add_argument("--solver", choices=io.SOLVERS, default=None)
    sp.add_argument("--full-decisions", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    level = os.environ.get("GRIDBARGAIN_LOG", "").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (Infeasible, SolverStall, NoConvergence) as exc:
        log.error("solver failure: %s", exc)
        return 3
    except BargainingFailed as exc:
        log.error("bargaining failure: %s", exc)
        return 4
    except GridBargainError as exc:
        log.error("invalid input: %s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
