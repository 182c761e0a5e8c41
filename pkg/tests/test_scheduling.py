"""Centralized social and individual schedulers.

The toy-instance expectations were produced by the brute-force oracles
in this file (exhaustive search over battery actions on a 0.1 kW
lattice) and frozen; each test re-runs its oracle so a drift in either
side shows up.
"""

import itertools
from dataclasses import replace

import numpy as np
import pytest

from gridbargain import (ConstantBdc, DesdParams, GridLimits, Horizon, Infeasible,
                         LengthMismatch, MicrogridModel, PiecewiseSocBdc,
                         PriceProfile, Pv, UserSpec, bdc_cost, individual_costs,
                         soc_trajectory, solve_individual, solve_social,
                         trading_cost, validate_model)
from gridbargain.fixtures import four_user_model, random_model, random_rg_profiles
from gridbargain.scheduling import FEAS_TOL

FLAT3 = PriceProfile(buy=np.full(3, 10.0), sell=np.full(3, 8.0))


# ---------------------------------------------------------------- costs

def test_trading_cost_zero():
    assert trading_cost(FLAT3, np.zeros(3), np.zeros(3)) == 0.0


def test_trading_cost_constant_rate():
    prices = PriceProfile(buy=np.full(24, 10.0), sell=np.full(24, 8.0))
    assert trading_cost(prices, np.ones(24), np.zeros(24)) == pytest.approx(240.0)


def test_trading_cost_buy_and_sell():
    prices = PriceProfile(buy=np.full(24, 10.0), sell=np.full(24, 8.0))
    assert trading_cost(prices, np.ones(24), np.ones(24)) == pytest.approx(48.0)


def test_trading_cost_length_mismatch():
    with pytest.raises(LengthMismatch):
        trading_cost(FLAT3, np.ones(5), np.zeros(5))


def test_bdc_cost_zero_throughput():
    assert bdc_cost(ConstantBdc(1.0), np.zeros(4), np.zeros(4), np.full(4, 2.0), 10.0) == 0.0


def test_bdc_cost_constant():
    got = bdc_cost(ConstantBdc(1.0), np.zeros(3), np.full(3, 2.0), np.full(3, 5.0), 10.0)
    assert got == pytest.approx(6.0)


def test_bdc_cost_piecewise_table_lookup():
    # oracle: units at soc/capacity 0.6/0.4/0.6 are 1/2/1 c/kWh and the
    # per-step throughputs 1/2/2 kWh, so 1*1 + 2*2 + 1*2 = 7 c by hand
    bdc = PiecewiseSocBdc(((0.0, 2.0), (0.5, 1.0)))
    got = bdc_cost(bdc, [1.0, 2.0, 0.0], [0.0, 0.0, 2.0], [6.0, 4.0, 6.0], 10.0)
    assert got == pytest.approx(7.0, abs=1e-12)


def test_bdc_cost_length_mismatch():
    with pytest.raises(LengthMismatch):
        bdc_cost(ConstantBdc(1.0), np.zeros(4), np.zeros(3), np.zeros(4), 10.0)


# ---------------------------------------------------------------- oracles

def _toy_model():
    """One passive plus one battery user, flat-then-peak tariff."""
    return validate_model(MicrogridModel(
        horizon=Horizon(steps=4, dt=1.0),
        users=(
            UserSpec("a"),
            UserSpec("b", desd=DesdParams(e0=0.5, e_min=0.0, e_max=1.0, p_b_max=0.3,
                                          kappa=1.0, bdc=ConstantBdc(0.0))),
        ),
        demands=np.array([[0.5, 0.5, 0.5, 0.5], [0.2, 0.2, 0.2, 0.8]]),
        prices=PriceProfile(buy=[10.0, 10.0, 10.0, 30.0], sell=[8.0, 8.0, 8.0, 24.0]),
        grid=GridLimits(100.0),
    ))


def _toy_grid_search():
    """Exhaustive search over net battery actions on the 0.1 kW lattice.

    kappa = 1 so only the net action matters, and every vertex of the LP
    lies on the lattice; the search is a true optimum, not a bound.
    """
    demand = np.array([0.7, 0.7, 0.7, 1.3])
    p_buy = np.array([10.0, 10.0, 10.0, 30.0])
    p_sell = np.array([8.0, 8.0, 8.0, 24.0])
    levels = np.round(np.arange(-0.3, 0.3 + 1e-12, 0.1), 10)
    best = np.inf
    for combo in itertools.product(levels, repeat=4):
        a = np.array(combo)
        soc = 0.5 - np.cumsum(a)
        if np.any(soc < -1e-12) or np.any(soc > 1.0 + 1e-12):
            continue
        net = demand - a
        cost = float(np.sum(p_buy * np.clip(net, 0, None)
                            - p_sell * np.clip(-net, 0, None)))
        best = min(best, cost)
    return best


def test_toy_social_matches_grid_search():
    oracle = _toy_grid_search()
    assert oracle == pytest.approx(49.0, abs=1e-9)  # frozen oracle output
    out = solve_social(_toy_model())
    assert out.social_cost == pytest.approx(oracle, abs=1e-6)


def test_social_zero_instance():
    # flat tariff so storage arbitrage cannot pay; with e0 = e_min and no
    # load the pool then has nothing to do
    m = four_user_model(p_g_max=50.0)
    flat = PriceProfile(buy=np.full(24, 10.0), sell=np.full(24, 8.0))
    m0 = validate_model(replace(m, demands=np.zeros((4, 24)), prices=flat,
                                _validated=False))
    out = solve_social(m0)
    assert out.social_cost == pytest.approx(0.0, abs=1e-9)
    assert abs(out.decision.grid_buy).max() <= 1e-9
    assert abs(out.decision.grid_sell).max() <= 1e-9
    for u in ("u1", "u3", "u4"):
        assert abs(out.decision.discharge[u]).max() <= 1e-9
        assert abs(out.decision.charge[u]).max() <= 1e-9


def test_social_single_passive_user(rng):
    d = rng.uniform(0, 3, size=5)
    prices = PriceProfile(buy=rng.uniform(5, 20, size=5), sell=np.full(5, 1.0))
    m = validate_model(MicrogridModel(
        horizon=Horizon(steps=5, dt=1.0), users=(UserSpec("p"),),
        demands=d[None, :], prices=prices))
    out = solve_social(m)
    assert out.social_cost == pytest.approx(float(prices.buy @ d), abs=1e-6)
    assert out.bdc_costs == {}


def test_social_cost_identity(reference_model, favorable_rg):
    out = solve_social(reference_model, favorable_rg)
    assert out.social_cost == pytest.approx(
        out.trading_cost + sum(out.bdc_costs.values()), abs=1e-9)


def test_infeasible_when_grid_too_small():
    m = validate_model(MicrogridModel(
        horizon=Horizon(steps=3, dt=1.0), users=(UserSpec("p"),),
        demands=np.full((1, 3), 2.0), prices=FLAT3, grid=GridLimits(0.5)))
    with pytest.raises(Infeasible):
        solve_social(m)


def test_individual_passive_is_forced_purchase(rng):
    d = rng.uniform(0, 3, size=6)
    prices = PriceProfile(buy=rng.uniform(5, 20, size=6), sell=np.full(6, 1.0))
    out = solve_individual(UserSpec("p"), d, prices, GridLimits(100.0),
                           Horizon(steps=6, dt=1.0))
    assert out.cost == pytest.approx(float(prices.buy @ d), abs=1e-9)
    assert out.decision.discharge is None and out.soc is None


def test_individual_flat_prices_battery_idles():
    # kappa < 1, flat tariff, e0 = e_min: cycling only loses energy.
    # Oracle (frozen): exhaustive 0.1 kW search returned exactly the
    # passive cost 12.0 for this instance.
    user = UserSpec("c", desd=DesdParams(e0=0.5, e_min=0.5, e_max=1.0, p_b_max=0.3,
                                         kappa=0.9, bdc=ConstantBdc(0.0)))
    out = solve_individual(user, np.full(3, 0.4), FLAT3, GridLimits(100.0),
                           Horizon(steps=3, dt=1.0))
    assert out.cost == pytest.approx(12.0, abs=1e-6)

    acts = np.round(np.arange(0.0, 0.3 + 1e-12, 0.1), 10)
    best = np.inf
    for combo in itertools.product(itertools.product(acts, acts), repeat=3):
        dis = np.array([c[0] for c in combo])
        ch = np.array([c[1] for c in combo])
        soc = 0.5 - np.cumsum(dis / 0.9 - 0.9 * ch)
        if np.any(soc < 0.5 - 1e-12) or np.any(soc > 1.0 + 1e-12):
            continue
        net = np.full(3, 0.4) - dis + ch
        best = min(best, float(np.sum(10.0 * np.clip(net, 0, None)
                                      - 8.0 * np.clip(-net, 0, None))))
    assert best == pytest.approx(12.0, abs=1e-12)


def test_individual_surplus_generation_profits():
    user = UserSpec("g", desd=DesdParams(e0=1.0, e_min=0.0, e_max=2.0, p_b_max=1.0,
                                         kappa=0.9, bdc=ConstantBdc(0.5)),
                    rg=Pv(5.0))
    rg = np.full(3, 3.0)  # covers the 1 kW demand with margin at every t
    out = solve_individual(user, np.ones(3), FLAT3, GridLimits(100.0),
                           Horizon(steps=3, dt=1.0), rg_profile=rg)
    assert out.cost < 0.0


def test_individual_costs_matches_per_user(reference_model, favorable_rg):
    table = individual_costs(reference_model, favorable_rg)
    assert set(table) == {"u1", "u2", "u3", "u4"}
    k = reference_model.user_index("u2")
    solo = solve_individual(reference_model.users[k], reference_model.demands[k],
                            reference_model.prices, reference_model.grid,
                            reference_model.horizon)
    assert table["u2"].cost == pytest.approx(solo.cost, abs=1e-9)


# ---------------------------------------------------------------- piecewise

def test_social_piecewise_bdc_converges():
    bdc = PiecewiseSocBdc(((0.0, 2.5), (0.3, 0.8)))
    m = four_user_model()
    users = tuple(
        replace(u, desd=replace(u.desd, bdc=bdc)) if u.is_active else u
        for u in m.users)
    m2 = validate_model(replace(m, users=users, _validated=False))
    out = solve_social(m2)
    # the reported cost must be the true step-cost of its own decision
    recomputed = trading_cost(m2.prices, out.decision.grid_buy, out.decision.grid_sell)
    for u in users:
        if u.is_active:
            recomputed += bdc_cost(bdc, out.decision.discharge[u.id],
                                   out.decision.charge[u.id], out.soc[u.id],
                                   u.desd.e_max)
    assert out.social_cost == pytest.approx(recomputed, abs=1e-9)
    # and no worse than pricing every kWh at the dearest segment
    flat_hi = solve_social(validate_model(replace(
        m, users=tuple(replace(u, desd=replace(u.desd, bdc=ConstantBdc(2.5)))
                       if u.is_active else u for u in m.users),
        _validated=False)))
    assert out.social_cost <= flat_hi.social_cost + 1e-6


# ---------------------------------------------------------------- properties

def _random_cases(n, seed, with_rg=True):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m = random_model(rng, r_max=5, T=24, with_rg=with_rg)
        rg = random_rg_profiles(m, rng) if with_rg else None
        yield m, rg


def test_suboptimality_bound():
    # stacked individual schedules are feasible for the pool, so the
    # cooperative optimum can never exceed the sum of ideal costs
    for m, rg in _random_cases(8, seed=100):
        j_soc = solve_social(m, rg).social_cost
        d_sum = sum(o.cost for o in individual_costs(m, rg).values())
        assert d_sum >= j_soc - 1e-6


def _assert_schedule_feasible(m, rg, out):
    T, dt = int(m.horizon.steps), float(m.horizon.dt)
    net = m.demands.sum(axis=0).astype(float).copy()
    for u in m.users:
        if rg and u.id in rg:
            net -= rg[u.id]
    supply = out.decision.grid_buy - out.decision.grid_sell
    for u in m.users:
        if u.is_active:
            supply = supply + out.decision.discharge[u.id] - out.decision.charge[u.id]
    np.testing.assert_allclose(supply, net, atol=1e-6)

    assert np.all(out.decision.grid_buy >= -1e-9)
    assert np.all(out.decision.grid_sell >= -1e-9)
    assert np.all(out.decision.grid_buy <= m.grid.p_g_max + 1e-6)
    assert np.all(out.decision.grid_sell <= m.grid.p_g_max + 1e-6)
    assert np.all(out.decision.grid_buy * out.decision.grid_sell <= 1e-6)

    for u in m.users:
        if not u.is_active:
            continue
        dis, ch = out.decision.discharge[u.id], out.decision.charge[u.id]
        assert np.all(dis >= -1e-9) and np.all(ch >= -1e-9)
        assert np.all(dis <= u.desd.p_b_max + 1e-6)
        assert np.all(ch <= u.desd.p_b_max + 1e-6)
        if isinstance(u.desd.bdc, ConstantBdc) and u.desd.bdc.c_d > 0:
            assert np.all(dis * ch <= 1e-6)
        soc = soc_trajectory(u.desd, dis, ch, dt)
        assert np.all(soc >= u.desd.e_min - 1e-6)
        assert np.all(soc <= u.desd.e_max + 1e-6)


def test_social_schedule_feasibility():
    for m, rg in _random_cases(8, seed=200):
        out = solve_social(m, rg)
        _assert_schedule_feasible(m, rg, out)


def _probe_cost(m, rg, discharge, charge):
    """True cost of a battery schedule completed by cheapest grid action."""
    net = m.demands.sum(axis=0).astype(float).copy()
    for u in m.users:
        if rg and u.id in rg:
            net -= rg[u.id]
    for u in m.users:
        if u.is_active:
            net = net - discharge[u.id] + charge[u.id]
    buy, sell = np.clip(net, 0, None), np.clip(-net, 0, None)
    if np.any(buy > m.grid.p_g_max + 1e-12) or np.any(sell > m.grid.p_g_max + 1e-12):
        return None
    cost = trading_cost(m.prices, buy, sell, m.horizon.dt)
    for u in m.users:
        if u.is_active:
            soc = soc_trajectory(u.desd, discharge[u.id], charge[u.id], m.horizon.dt)
            if np.any(soc < u.desd.e_min - 1e-12) or np.any(soc > u.desd.e_max + 1e-12):
                return None
            cost += bdc_cost(u.desd.bdc, discharge[u.id], charge[u.id], soc,
                             u.desd.e_max, m.horizon.dt)
    return cost


def test_social_optimum_survives_coordinate_probe():
    # finite-difference optimality check: no single battery coordinate
    # can move by 1e-3 kW (staying feasible) and beat the optimum by
    # more than 1e-5 cents
    for m, rg in _random_cases(3, seed=300):
        out = solve_social(m, rg)
        base = out.social_cost
        for u in m.users:
            if not u.is_active:
                continue
            for series in ("discharge", "charge"):
                sched = getattr(out.decision, series)[u.id]
                for t in range(int(m.horizon.steps)):
                    for delta in (1e-3, -1e-3):
                        trial = sched.copy()
                        trial[t] += delta
                        if trial[t] < 0 or trial[t] > u.desd.p_b_max:
                            continue
                        dis = {k: v.copy() for k, v in out.decision.discharge.items()}
                        ch = {k: v.copy() for k, v in out.decision.charge.items()}
                        (dis if series == "discharge" else ch)[u.id] = trial
                        cost = _probe_cost(m, rg, dis, ch)
                        if cost is not None:
                            assert cost >= base - 1e-5


def test_price_scaling_scales_costs():
    rng = np.random.default_rng(400)
    m = random_model(rng, r_max=4, T=24)
    rg = random_rg_profiles(m, rng)
    alpha = 3.7
    scaled_users = tuple(
        replace(u, desd=replace(u.desd, bdc=ConstantBdc(alpha * u.desd.bdc.c_d)))
        if u.is_active else u for u in m.users)
    m2 = validate_model(replace(
        m, users=scaled_users,
        prices=PriceProfile(buy=alpha * m.prices.buy, sell=alpha * m.prices.sell),
        _validated=False))
    j1 = solve_social(m, rg).social_cost
    j2 = solve_social(m2, rg).social_cost
    assert j2 == pytest.approx(alpha * j1, rel=1e-6)
    d1 = individual_costs(m, rg)
    d2 = individual_costs(m2, rg)
    for uid in d1:
        assert d2[uid].cost == pytest.approx(alpha * d1[uid].cost, rel=1e-6, abs=1e-9)


def test_feas_tol_is_tight():
    assert FEAS_TOL == 1e-6
