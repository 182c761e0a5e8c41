"""The same day solved without a coordinator.

Every agent (four households and the grid connection point) keeps its
demand, generation, and battery data to itself. Agents exchange only
price vectors and a running supply/demand mismatch with their ring
neighbors; the duality-gap certificate tells the network when to stop.
Afterwards the cooperative discount is settled the same way, by
averaging consensus, and checked against the closed-form split.
"""

import numpy as np

from gridbargain import (allocate, allocate_from_consensus, build_pools,
                         data_path, forecast_all, load_experiment, load_model,
                         metropolis_weights, run_average_consensus, run_codes,
                         selfish_cost)
from gridbargain.codes import convergence_trace
from gridbargain.scheduling import individual_costs, solve_social


def main():
    config = load_experiment(data_path("experiment.yaml"))
    model = load_model(config.model_path)
    rg = forecast_all(build_pools(config), config.forecast)

    run = run_codes(model, rg)
    trace = convergence_trace(run)
    print("certificate checks (cents of gap / kW of imbalance):")
    for k, gap, resid in zip(trace["round"], trace["cost_gap"],
                             trace["balance_residual"]):
        print(f"  round {k:4d}   gap {gap:10.4f}   residual {resid:.2e}")
    print(f"converged after {run.iterations} rounds, "
          f"J_soc = {run.outcome.social_cost:.2f} c")

    oracle = solve_social(model, rg)
    print(f"pooled oracle agrees to {abs(run.outcome.social_cost - oracle.social_cost):.2e} c")

    # settlement: consensus over (declared cost - own degradation bill),
    # grid node contributes the negated energy bill; the network average
    # is exactly the per-node share of the surplus
    solo = individual_costs(model, rg)
    d = np.array([solo[u.id].cost for u in model.users])
    s = selfish_cost(d, np.zeros(model.n_users))
    x0 = np.concatenate([
        [s[k] - run.outcome.bdc_costs.get(u.id, 0.0)
         for k, u in enumerate(model.users)],
        [-run.outcome.trading_cost],
    ])
    W = metropolis_weights(model.graph, model.n_users + 1)
    cons = run_average_consensus(x0, W)
    j = allocate_from_consensus(s, cons.final[:model.n_users], model.n_users)
    direct = allocate(d, run.outcome.social_cost).j
    print(f"\nconsensus settlement in {cons.iterations} iterations:")
    for u, ji, ref in zip(model.users, j, direct):
        print(f"  {u.id} pays {ji:8.2f} c (direct formula {ref:8.2f} c)")


if __name__ == "__main__":
    main()
