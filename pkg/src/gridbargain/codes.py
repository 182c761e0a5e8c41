"""Distributed social scheduling by consensus on prices.

The pooled schedule of ``scheduling.solve_social`` is recovered without
any agent revealing its demand, generation, or device parameters. Each
agent (r users plus the grid) keeps a private copy of the shadow price
of power balance at every step and a tracker of the network-wide
supply-demand mismatch. A synchronous round is:

1. local step: the agent re-optimizes only its own devices against its
   current price copy. Users solve a small storage program (lazily: a
   fresh solve only once their price copy has moved); the grid ramps
   its exchange toward profitability, a damped best response that keeps
   the network signal smooth.
2. exchange: the agent sends neighbors its price copy and mismatch
   tracker, nothing else.
3. update: price copies are averaged with Metropolis weights and nudged
   by a diminishing step a/(k+b) times the mismatch tracker
   (innovation); trackers are averaged and corrected by the change in
   the agent's own imbalance, which keeps their network sum equal to
   the true instantaneous mismatch.

Price oscillation is smoothed by tail averaging (accumulators restart
at geometrically growing rounds, so averages cover roughly the trailing
half). The candidate schedule is the tail-averaged user schedules with
the grid absorbing the leftover imbalance; its cost minus the dual
value of the tail-averaged network price is a certified optimality gap,
and the run stops once that certificate meets the cost tolerance. A
final per-user cleanup pass re-times each storage schedule at fixed net
injection, which removes any simultaneous charge/discharge the
averaging introduced.

The routine is deterministic for a given (model, config, seed); the
seed only feeds the optional initial price jitter and is recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .consensus import metropolis_weights
from .errors import InvariantViolation, SolverStall
from .model import ConstantBdc, soc_trajectory, validate_model
from .scheduling import SocialDecision, SocialScheduleOutcome, bdc_cost, trading_cost

__all__ = [
    "CodesConfig",
    "RoundMessage",
    "AgentState",
    "CodesRun",
    "run_codes",
    "convergence_trace",
    "dump_message_log",
    "GRID_AGENT",
]

GRID_AGENT = "grid"


@dataclass(frozen=True)
class CodesConfig:
    """Knobs for the distributed run.

    step_a/step_b set the diminishing step a/(k+b). The cost tolerance
    is max(cost_tol_abs cents, cost_tol_rel * |cost|); residual_tol
    bounds the kW of imbalance the grid patch may leave; dual_tol is
    the price agreement required across agents at termination.
    grid_ramp is the grid agent's damping (kW of response per cent of
    price incentive per round); lazy_tol is the price movement that
    triggers a fresh user solve.
    """

    step_a: float = 1.0
    step_b: float = 10.0
    max_rounds: int = 6000
    check_every: int = 25
    cost_tol_abs: float = 0.1
    cost_tol_rel: float = 1e-3
    residual_tol: float = 1e-6
    dual_tol: float = 1e-3
    grid_ramp: float = 4.0
    lazy_tol: float = 0.02
    record_messages: bool = False
    init_jitter: float = 0.0
    relinearize_every: int = 100

    def __post_init__(self):
        bad = []
        if not self.step_a > 0:
            bad.append(f"step_a must be > 0, got {self.step_a}")
        if not self.step_b >= 1:
            bad.append(f"step_b must be >= 1, got {self.step_b}")
        for name in ("cost_tol_abs", "cost_tol_rel", "residual_tol", "dual_tol"):
            if not getattr(self, name) > 0:
                bad.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.max_rounds < 1 or self.check_every < 1:
            bad.append("max_rounds and check_every must be >= 1")
        if self.grid_ramp <= 0 or self.lazy_tol < 0:
            bad.append("grid_ramp must be > 0 and lazy_tol >= 0")
        if bad:
            raise InvariantViolation(bad)


@dataclass(frozen=True)
class RoundMessage:
    """What one agent puts on the bus in one round.

    Only coordination state: the sender's price copy and mismatch
    tracker. No demand, generation, or device fields exist here, which
    is the privacy contract the audit checks.
    """

    sender: str
    iteration: int
    dual_prices: np.ndarray
    mismatch: np.ndarray


@dataclass
class AgentState:
    """Private, per-agent working state (never serialized onto the bus)."""

    agent_id: str
    dual_prices: np.ndarray
    mismatch: np.ndarray
    residual: np.ndarray  # own current contribution to imbalance, kW
    discharge: np.ndarray | None = None
    charge: np.ndarray | None = None
    avg_discharge: np.ndarray | None = None
    avg_charge: np.ndarray | None = None
    avg_count: int = 0
    solved_at: np.ndarray | None = None  # price copy of the last fresh solve


@dataclass(frozen=True)
class CodesRun:
    outcome: SocialScheduleOutcome
    ledger: dict  # agent id -> cents it accounts for (grid: trading cost)
    converged: bool
    iterations: int
    gap: float
    trace: np.ndarray  # (checks, 3): round, certified gap, patch residual kW
    final_duals: np.ndarray  # (agents, T) prices at termination
    messages: list | None = None
    seed: int | None = None


class _UserLocal:
    """One active user's storage subproblem, solved exactly when asked.

    min sum_t ((c - lam) discharge + (c + lam) charge) dt over the SOC
    polytope; the constraint matrix is built once, only costs change.
    """

    def __init__(self, desd, T, dt):
        self.desd, self.T, self.dt = desd, T, dt
        L = np.tril(np.ones((T, T)))
        drain = np.hstack([L / desd.kappa, -desd.kappa * L]) * dt
        self.A_ub = np.vstack([drain, -drain])
        self.b_ub = np.concatenate([
            np.full(T, desd.e0 - desd.e_min), np.full(T, desd.e_max - desd.e0),
        ])
        self.bounds = [(0.0, desd.p_b_max)] * (2 * T)

    def solve(self, unit_cost, lam):
        c = np.concatenate([unit_cost - lam, unit_cost + lam]) * self.dt
        res = linprog(c, A_ub=self.A_ub, b_ub=self.b_ub, bounds=self.bounds,
                      method="highs")
        if res.status != 0:
            raise SolverStall(f"local storage step failed: {res.message}")
        return res.x[:self.T], res.x[self.T:], float(res.fun)

    def min_throughput(self, unit_cost, net):
        """Cheapest schedule with the given net injection (cleanup pass)."""
        T = self.T
        A_eq = np.hstack([np.eye(T), -np.eye(T)])
        c = np.concatenate([unit_cost, unit_cost]) + 1e-9  # break zero-cost ties
        res = linprog(c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=A_eq, b_eq=net,
                      bounds=self.bounds, method="highs")
        if res.status != 0:
            raise SolverStall(f"cleanup pass failed: {res.message}")
        return res.x[:T], res.x[T:]

    def social_response(self, unit_cost, pb, ps, p_max, resid, dt):
        """Best response against the true tariff with everyone else frozen.

        resid is the imbalance this user and the grid must cover
        together; variables are [discharge, charge, grid buy, grid
        sell] and the answer is the user's schedule plus the cost of
        the pair.
        """
        T = self.T
        Z = np.zeros((2 * T, 2 * T))
        A_ub = np.hstack([self.A_ub, Z])
        eye = np.eye(T)
        A_eq = np.hstack([eye, -eye, eye, -eye])
        c = np.concatenate([unit_cost + 1e-9, unit_cost + 1e-9, pb, ps * -1.0]) * dt
        bounds = self.bounds + [(0.0, p_max)] * (2 * T)
        res = linprog(c, A_ub=A_ub, b_ub=self.b_ub, A_eq=A_eq, b_eq=resid,
                      bounds=bounds, method="highs")
        if res.status != 0:
            raise SolverStall(f"rebalance step failed: {res.message}")
        return res.x[:T], res.x[T:2 * T], float(res.fun)


def _dual_value(lam, netload, pb, ps, p_max, dt, locals_, units):
    """Lower bound on the social cost at a common price vector lam."""
    q = float(np.sum(lam * netload) * dt)
    q += float(np.sum(np.minimum(0.0, pb - lam) * p_max * dt))
    q += float(np.sum(np.minimum(0.0, lam - ps) * p_max * dt))
    for uid, loc in locals_.items():
        _, _, fun = loc.solve(units[uid], lam)
        q += fun
    return q


def run_codes(model, rg=None, config=None, seed=None):
    """Distributed social schedule; see the module docstring.

    Returns a CodesRun whose outcome mirrors ``solve_social``. Running
    out of rounds is reported softly (converged=False, best candidate
    kept) so experiments can log it rather than die.
    """
    model = validate_model(model)
    config = config or CodesConfig()
    T, dt = int(model.horizon.steps), float(model.horizon.dt)
    r = model.n_users
    n = r + 1
    pb, ps = model.prices.buy, model.prices.sell
    p_max = model.grid.p_g_max

    rg_prof = {}
    for k, u in enumerate(model.users):
        prof = None
        if rg is not None:
            prof = rg.profiles.get(u.id) if hasattr(rg, "profiles") else rg.get(u.id)
        rg_prof[u.id] = np.zeros(T) if prof is None else np.asarray(prof, dtype=float)

    netload = model.demands.sum(axis=0) - sum(rg_prof.values())
    W = metropolis_weights(model.graph, n)

    active = [u for u in model.users if u.is_active]
    locals_ = {u.id: _UserLocal(u.desd, T, dt) for u in active}
    units = {u.id: np.full(T, float(u.desd.bdc.unit_cost(u.desd.e0 / u.desd.e_max)))
             for u in active}
    all_constant = all(isinstance(u.desd.bdc, ConstantBdc) for u in active)

    lam0 = 0.5 * (pb + ps)
    lam = np.tile(lam0, (n, 1))
    if config.init_jitter > 0.0:
        jit = np.random.default_rng(seed).uniform(
            -config.init_jitter, config.init_jitter, size=lam.shape)
        lam = np.clip(lam + jit, 0.0, None)
    lam_hi = 1.5 * float(pb.max()) + 1.0

    # Round 0 local step seeds the residuals and trackers. The grid
    # starts idle and ramps from there.
    states = []
    for k, u in enumerate(model.users):
        st = AgentState(agent_id=u.id, dual_prices=lam[k].copy(),
                        mismatch=np.zeros(T), residual=np.zeros(T))
        if u.is_active:
            st.discharge, st.charge, _ = locals_[u.id].solve(units[u.id], lam[k])
            st.avg_discharge, st.avg_charge = st.discharge.copy(), st.charge.copy()
            st.avg_count = 1
            st.solved_at = lam[k].copy()
        st.residual = model.demands[k] - rg_prof[u.id] - (
            (st.discharge - st.charge) if u.is_active else np.zeros(T))
        st.mismatch = st.residual.copy()
        states.append(st)
    gst = AgentState(agent_id=GRID_AGENT, dual_prices=lam[r].copy(),
                     mismatch=np.zeros(T), residual=np.zeros(T),
                     discharge=np.zeros(T), charge=np.zeros(T))
    states.append(gst)

    M = np.vstack([st.mismatch for st in states])
    messages = [] if config.record_messages else None

    lam_net_acc = lam.mean(axis=0)
    lam_net_cnt = 1
    best_q = -np.inf
    best_cost = np.inf
    best = None  # (avg schedules, patch) snapshot at best_cost
    rebalanced_from = None
    trace = []
    gain = float(n)
    next_restart = 64
    converged = False
    rounds_done = 0

    def tol_for(cost):
        return max(config.cost_tol_abs, config.cost_tol_rel * abs(cost))

    def candidate():
        """Feasible schedule from tail averages plus a grid patch."""
        avg_d, avg_c = {}, {}
        for u in active:
            st = states[model.user_index(u.id)]
            avg_d[u.id] = np.clip(st.avg_discharge / st.avg_count, 0.0, u.desd.p_b_max)
            avg_c[u.id] = np.clip(st.avg_charge / st.avg_count, 0.0, u.desd.p_b_max)
        g = netload - sum((avg_d[u.id] - avg_c[u.id] for u in active), np.zeros(T))
        gb, gs = np.clip(g, 0.0, p_max), np.clip(-g, 0.0, p_max)
        resid = float(np.max(np.abs(g - (gb - gs)))) if T else 0.0
        cost = trading_cost(model.prices, gb, gs, dt)
        for u in active:
            cost += float(np.sum(units[u.id] * (avg_d[u.id] + avg_c[u.id])) * dt)
        return avg_d, avg_c, gb, gs, resid, cost

    def rebalance(d0, c0):
        """Round-robin exact best responses against the true tariff.

        Averaging can leave small imbalances on hours where several
        schedules tie; patching them at the tariff spread costs real
        cents. Letting each user in turn re-solve against the true
        prices with everyone else frozen moves that mass back. Each
        pass only needs the aggregate of the others, which is what the
        mismatch tracker already circulates.
        """
        d = {u.id: d0[u.id].copy() for u in active}
        c = {u.id: c0[u.id].copy() for u in active}
        inj = sum((d[u.id] - c[u.id] for u in active), np.zeros(T))
        prev = np.inf
        out = None
        for _ in range(3):
            for u in active:
                own = d[u.id] - c[u.id]
                nd, nc, _ = locals_[u.id].social_response(
                    units[u.id], pb, ps, p_max, netload - (inj - own), dt)
                inj += (nd - nc) - own
                d[u.id], c[u.id] = nd, nc
            g = netload - inj
            gb, gs = np.clip(g, 0.0, p_max), np.clip(-g, 0.0, p_max)
            cost = trading_cost(model.prices, gb, gs, dt)
            for u in active:
                cost += float(np.sum(units[u.id] * (d[u.id] + c[u.id])) * dt)
            if cost > prev - 1e-6:
                break
            prev = cost
            resid = float(np.max(np.abs(g - (gb - gs)))) if T else 0.0
            out = ({k_: v.copy() for k_, v in d.items()},
                   {k_: v.copy() for k_, v in c.items()}, gb, gs, resid, cost)
        return out

    for k in range(1, config.max_rounds + 1):
        rounds_done = k
        if config.record_messages:
            for st in states:
                messages.append(RoundMessage(
                    sender=st.agent_id, iteration=k,
                    dual_prices=st.dual_prices.copy(), mismatch=st.mismatch.copy(),
                ))

        step = config.step_a / (k + config.step_b)
        lam = np.clip(W @ np.vstack([st.dual_prices for st in states])
                      + step * gain * M, 0.0, lam_hi)
        M_mixed = W @ M
        restart = k >= next_restart
        if restart:
            next_restart *= 2

        for idx, st in enumerate(states):
            st.dual_prices = lam[idx]
            old_res = st.residual
            if st.agent_id == GRID_AGENT:
                st.discharge = np.clip(
                    st.discharge + (lam[idx] - pb) / config.grid_ramp, 0.0, p_max)
                st.charge = np.clip(
                    st.charge + (ps - lam[idx]) / config.grid_ramp, 0.0, p_max)
                st.residual = -(st.discharge - st.charge)
            elif st.agent_id in locals_:
                if (st.solved_at is None
                        or float(np.max(np.abs(lam[idx] - st.solved_at))) > config.lazy_tol):
                    st.discharge, st.charge, _ = locals_[st.agent_id].solve(
                        units[st.agent_id], lam[idx])
                    st.solved_at = lam[idx].copy()
                st.residual = (model.demands[idx] - rg_prof[st.agent_id]
                               - (st.discharge - st.charge))
                if restart:
                    st.avg_discharge = np.zeros(T)
                    st.avg_charge = np.zeros(T)
                    st.avg_count = 0
                st.avg_discharge += st.discharge
                st.avg_charge += st.charge
                st.avg_count += 1
            st.mismatch = M_mixed[idx] + st.residual - old_res
        M = np.vstack([st.mismatch for st in states])

        if restart:
            lam_net_acc = np.zeros(T)
            lam_net_cnt = 0
        lam_net_acc += lam.mean(axis=0)
        lam_net_cnt += 1

        if k % config.check_every == 0 or k == config.max_rounds:
            if not all_constant and k % config.relinearize_every == 0:
                changed = False
                for u in active:
                    st = states[model.user_index(u.id)]
                    soc = soc_trajectory(u.desd, st.avg_discharge / st.avg_count,
                                         st.avg_charge / st.avg_count, dt)
                    new = np.asarray(u.desd.bdc.unit_cost(
                        np.clip(soc, u.desd.e_min, u.desd.e_max) / u.desd.e_max),
                        dtype=float)
                    if not np.array_equal(new, units[u.id]):
                        units[u.id] = new
                        changed = True
                if changed:  # objective moved; old bounds no longer comparable
                    best_q, best_cost, best = -np.inf, np.inf, None
                    rebalanced_from = None

            avg_d, avg_c, gb, gs, resid, cost = candidate()
            lam_tail = np.clip(lam_net_acc / lam_net_cnt, ps, pb)
            # Any common price gives a valid lower bound. The clip to
            # the price band removes the grid's huge penalty for tiny
            # overshoots; the snap pins hours where the candidate says
            # the grid trades, since there the price must sit on the
            # corresponding tariff to be tight.
            lam_snap = np.where(gb > 1e-6, pb, np.where(gs > 1e-6, ps, lam_tail))
            q1 = _dual_value(lam_tail, netload, pb, ps, p_max, dt, locals_, units)
            q2 = _dual_value(lam_snap, netload, pb, ps, p_max, dt, locals_, units)
            best_q = max(best_q, q1, q2)
            if cost < best_cost and resid <= config.residual_tol:
                best_cost = cost
                best = (avg_d, avg_c, gb, gs, resid)
            gap = best_cost - best_q
            close = gap <= max(20.0 * tol_for(best_cost), 2.0)
            if (best is not None and gap > tol_for(best_cost)
                    and (close or k == config.max_rounds)
                    and best is not rebalanced_from):
                rebalanced_from = best
                try:
                    better = rebalance(best[0], best[1])
                except SolverStall:
                    better = None
                if (better is not None and better[5] < best_cost
                        and better[4] <= config.residual_tol):
                    best = better[:5]
                    best_cost = better[5]
                    rebalanced_from = best
                    gap = best_cost - best_q
            trace.append((k, gap, best[4] if best else resid))
            if best is not None and gap <= tol_for(best_cost):
                converged = True
                break

    if best is None:  # never had a candidate within residual tolerance
        avg_d, avg_c, gb, gs, resid, cost = candidate()
        best, best_cost = (avg_d, avg_c, gb, gs, resid), cost

    # Price agreement polish: plain averaging, no innovation.
    polish = 0
    while polish < 2000 and float(np.max(lam.max(axis=0) - lam.min(axis=0))) > config.dual_tol:
        polish += 1
        if config.record_messages:
            for st in states:
                messages.append(RoundMessage(
                    sender=st.agent_id, iteration=rounds_done + polish,
                    dual_prices=st.dual_prices.copy(), mismatch=st.mismatch.copy(),
                ))
        lam = W @ lam
        M = W @ M
        for idx, st in enumerate(states):
            st.dual_prices, st.mismatch = lam[idx], M[idx]

    avg_d, avg_c, gb, gs, resid = best
    discharge, charge, soc, bdc_costs = {}, {}, {}, {}
    for u in active:
        d_c, c_c = locals_[u.id].min_throughput(units[u.id], avg_d[u.id] - avg_c[u.id])
        discharge[u.id], charge[u.id] = d_c, c_c
        soc[u.id] = soc_trajectory(u.desd, d_c, c_c, dt)
        bdc_costs[u.id] = bdc_cost(u.desd.bdc, d_c, c_c, soc[u.id], u.desd.e_max, dt)
    trade = trading_cost(model.prices, gb, gs, dt)
    outcome = SocialScheduleOutcome(
        decision=SocialDecision(gb, gs, discharge, charge),
        trading_cost=trade, bdc_costs=bdc_costs,
        social_cost=trade + sum(bdc_costs.values()), soc=soc,
    )
    ledger = {GRID_AGENT: trade}
    for u in model.users:
        ledger[u.id] = bdc_costs.get(u.id, 0.0)

    return CodesRun(
        outcome=outcome, ledger=ledger, converged=converged,
        iterations=rounds_done, gap=float(best_cost - best_q),
        trace=np.array(trace, dtype=float).reshape(-1, 3),
        final_duals=lam.copy(), messages=messages,
        seed=None if seed is None else int(seed),
    )


def convergence_trace(run):
    """Trace as named columns: round index, certified gap, patch residual."""
    t = run.trace
    return {
        "round": t[:, 0].astype(int),
        "cost_gap": t[:, 1],
        "balance_residual": t[:, 2],
    }


def dump_message_log(run, path):
    """Write the recorded message log as line-delimited JSON."""
    if run.messages is None:
        raise ValueError("run was made without record_messages=True")
    with open(path, "w") as fh:
        for msg in run.messages:
            fh.write(json.dumps({
                "sender": msg.sender,
                "iteration": msg.iteration,
                "dual_prices": msg.dual_prices.tolist(),
                "mismatch": msg.mismatch.tolist(),
            }, sort_keys=True))
            fh.write("\n")
