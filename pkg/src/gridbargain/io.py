"""File formats: model and experiment YAML, CSV series, JSON reports.

A model file describes the microgrid and points at two CSVs: demands
(header row of user ids, one row per step, kW) and prices (header
``p_buy,p_sell``, cents/kWh). Scenario pools are plain numeric CSVs,
one row per historical day. All relative paths resolve against the
file that mentions them.

Reports are JSON with sorted keys; series go to CSV side files printed
with 9 significant digits. Identical inputs give byte-identical output
(timings never go into the report file).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .errors import FileError, InvariantViolation, KindMismatch
from .model import (
    ConstantBdc,
    DesdParams,
    GridLimits,
    Horizon,
    MicrogridModel,
    PiecewiseSocBdc,
    PriceProfile,
    Pv,
    UserSpec,
    Wt,
    validate_model,
)
from .rg_forecast import WeatherForecast, classify_scenarios

__all__ = [
    "read_matrix",
    "read_table",
    "write_csv",
    "write_json",
    "jsonable",
    "load_model",
    "ExperimentConfig",
    "load_experiment",
    "build_pools",
    "data_path",
]

SOLVERS = ("centralized", "distributed")


def data_path(name):
    """Absolute path of a file shipped in the package data directory."""
    p = resources.files("gridbargain").joinpath("data", name)
    return str(p)


def _must_exist(path):
    if not os.path.isfile(path):
        raise FileError(path)
    return path


def read_matrix(path):
    """Plain numeric CSV as a 2-D float array (scenario pools)."""
    arr = np.loadtxt(_must_exist(path), delimiter=",", ndmin=2, comments="#")
    return arr


def read_table(path):
    """CSV with one header line; returns (column names, 2-D float array)."""
    with open(_must_exist(path)) as fh:
        header = fh.readline().strip()
    cols = [c.strip() for c in header.split(",")]
    arr = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    if arr.shape[1] != len(cols):
        raise InvariantViolation(
            [f"{path}: {len(cols)} header columns but {arr.shape[1]} data columns"])
    return cols, arr


def write_csv(path, array, header=None):
    """Numeric CSV at 9 significant digits; header written verbatim."""
    array = np.asarray(array, dtype=float)
    np.savetxt(path, array, delimiter=",", fmt="%.9g",
               header=header or "", comments="")


def jsonable(obj):
    """Recursively strip numpy and dataclass wrappers for json.dumps."""
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj) if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(jsonable(obj), sort_keys=True, indent=2))
        fh.write("\n")


def _load_yaml(path):
    with open(_must_exist(path)) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise InvariantViolation([f"{path}: top level must be a mapping"])
    return raw


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def _bdc_from(node, uid):
    if node is None:
        return ConstantBdc(0.0)
    if isinstance(node, (int, float)):
        return ConstantBdc(float(node))
    try:
        return PiecewiseSocBdc(tuple((float(a), float(b)) for a, b in node))
    except (TypeError, ValueError):
        raise InvariantViolation(
            [f"user {uid}: bdc must be a number or a list of [soc_frac, cost] pairs"])


def _user_from(node):
    if "id" not in node:
        raise InvariantViolation(["every user needs an id"])
    uid = str(node["id"])
    desd = None
    if node.get("desd") is not None:
        d = node["desd"]
        try:
            desd = DesdParams(
                e0=float(d["e0"]), e_min=float(d["e_min"]), e_max=float(d["e_max"]),
                p_b_max=float(d["p_b_max"]), kappa=float(d.get("kappa", 1.0)),
                bdc=_bdc_from(d.get("bdc"), uid),
            )
        except KeyError as missing:
            raise InvariantViolation([f"user {uid}: desd needs field {missing}"])
    rg = None
    if node.get("rg") is not None:
        g = node["rg"]
        kind = g.get("kind")
        if kind == "pv":
            rg = Pv(size_kw=float(g["size_kw"]))
        elif kind == "wt":
            rg = Wt(size_kw=float(g["size_kw"]))
        else:
            raise KindMismatch(f"user {uid}: rg kind must be 'pv' or 'wt', got {kind!r}")
    return UserSpec(id=uid, desd=desd, rg=rg)


def load_prices(path, steps):
    cols, arr = read_table(path)
    try:
        buy = arr[:, cols.index("p_buy")]
        sell = arr[:, cols.index("p_sell")]
    except ValueError:
        raise InvariantViolation([f"{path}: needs columns p_buy and p_sell"])
    if arr.shape[0] != steps:
        raise InvariantViolation(
            [f"{path}: {arr.shape[0]} rows but the horizon has {steps} steps"])
    return PriceProfile(buy=buy, sell=sell)


def load_demands(path, user_ids, steps):
    cols, arr = read_table(path)
    if arr.shape[0] != steps:
        raise InvariantViolation(
            [f"{path}: {arr.shape[0]} rows but the horizon has {steps} steps"])
    missing = [uid for uid in user_ids if uid not in cols]
    if missing:
        raise InvariantViolation([f"{path}: no demand column for users {missing}"])
    return np.vstack([arr[:, cols.index(uid)] for uid in user_ids])


def load_model(path):
    """Microgrid model from YAML; returns it validated."""
    base = os.path.dirname(os.path.abspath(path))
    raw = _load_yaml(path)
    for key in ("horizon", "users", "prices", "demands"):
        if key not in raw:
            raise InvariantViolation([f"{path}: missing section {key!r}"])
    horizon = Horizon(steps=int(raw["horizon"]["steps"]),
                      dt=float(raw["horizon"].get("dt", 1.0)))
    users = tuple(_user_from(n) for n in raw["users"])
    prices = load_prices(_resolve(base, raw["prices"]), horizon.steps)
    demands = load_demands(_resolve(base, raw["demands"]),
                           [u.id for u in users], horizon.steps)
    grid = None
    if raw.get("grid") is not None:
        grid = GridLimits(p_g_max=float(raw["grid"]["p_g_max"]))
    graph = None
    if raw.get("graph") is not None:
        graph = tuple((int(a), int(b)) for a, b in raw["graph"])
    return validate_model(MicrogridModel(
        horizon=horizon, users=users, demands=demands, prices=prices,
        grid=grid, graph=graph,
    ))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment file with every referenced path resolved.

    ``scenario_files`` maps user id to (csv path, kind). ``mc_honest``
    holds 1-based user positions, matching how reports number users.
    """

    path: str
    model_path: str
    scenario_files: dict
    forecast: WeatherForecast | None
    weights: str
    seed: int
    gamma: np.ndarray | None
    gamma_sweep: dict | None
    solver: str
    codes_overrides: dict
    consensus_overrides: dict
    mc_samples: int
    mc_honest: tuple
    mc_seed: int
    out_dir: str | None


def load_experiment(path):
    raw = _load_yaml(path)
    base = os.path.dirname(os.path.abspath(path))
    problems = []

    if "model" not in raw:
        raise InvariantViolation([f"{path}: missing 'model' entry"])
    model_path = _resolve(base, raw["model"])
    if not os.path.isfile(model_path):
        raise FileError(model_path)

    scenario_files = {}
    for uid, node in (raw.get("scenarios") or {}).items():
        f = _resolve(base, node["file"])
        if not os.path.isfile(f):
            raise FileError(f)
        kind = node.get("kind")
        if kind not in ("pv", "wt"):
            problems.append(f"scenario {uid}: kind must be 'pv' or 'wt', got {kind!r}")
        scenario_files[str(uid)] = (f, kind)

    forecast = None
    if raw.get("forecast") is not None:
        f = raw["forecast"]
        forecast = WeatherForecast(solar=tuple(f["solar"]), wind=tuple(f["wind"]))

    weights = raw.get("weights", "random")
    if weights not in ("random", "equal"):
        problems.append(f"weights must be 'random' or 'equal', got {weights!r}")

    gamma = None
    if raw.get("gamma") is not None:
        gamma = np.asarray(raw["gamma"], dtype=float)
        if np.any(gamma < 0.0):
            problems.append("gamma entries must be >= 0")

    sweep = raw.get("gamma_sweep")
    if sweep is not None:
        for key in ("users", "num"):
            if key not in sweep:
                problems.append(f"gamma_sweep needs field {key!r}")

    solver = raw.get("solver", "centralized")
    if solver not in SOLVERS:
        problems.append(f"solver must be one of {SOLVERS}, got {solver!r}")

    mc = raw.get("monte_carlo") or {}
    mc_samples = int(mc.get("samples", 0))
    mc_honest = tuple(int(i) for i in mc.get("honest", ()))
    if any(i < 1 for i in mc_honest):
        problems.append("monte_carlo.honest uses 1-based user positions")

    if problems:
        raise InvariantViolation(problems)

    return ExperimentConfig(
        path=os.path.abspath(path), model_path=model_path,
        scenario_files=scenario_files, forecast=forecast, weights=weights,
        seed=int(raw.get("seed", 0)), gamma=gamma, gamma_sweep=sweep,
        solver=solver, codes_overrides=dict(raw.get("codes") or {}),
        consensus_overrides=dict(raw.get("consensus") or {}),
        mc_samples=mc_samples, mc_honest=mc_honest,
        mc_seed=int(mc.get("seed", raw.get("seed", 0))),
        out_dir=_resolve(base, raw["out_dir"]) if raw.get("out_dir") else None,
    )


def build_pools(config):
    """Classified scenario pools for every RG user in the experiment.

    Class weights draw from seed + position so pools get distinct but
    reproducible draws; ``weights: equal`` sidesteps randomness.
    """
    pools = {}
    for k, uid in enumerate(sorted(config.scenario_files)):
        path, kind = config.scenario_files[uid]
        pools[uid] = classify_scenarios(
            read_matrix(path), kind,
            seed=config.seed + k, weights=config.weights,
        )
    return pools
