"""One day, start to finish: forecast, pooled schedule, solo schedules,
and the bargained split of the savings.
"""

import numpy as np

from gridbargain import (allocate, build_pools, data_path, forecast_all,
                         load_experiment, load_model)
from gridbargain.scheduling import individual_costs, solve_social


def main():
    config = load_experiment(data_path("experiment.yaml"))
    model = load_model(config.model_path)
    rg = forecast_all(build_pools(config), config.forecast)

    print("expected generation:")
    for uid in sorted(rg.profiles):
        print(f"  {uid}: {rg.profiles[uid].sum():6.2f} kWh")

    pooled = solve_social(model, rg)
    print(f"\npooled schedule: J_soc = {pooled.social_cost:.2f} c "
          f"(energy {pooled.trading_cost:.2f} c, "
          f"degradation {sum(pooled.bdc_costs.values()):.2f} c)")

    solo = individual_costs(model, rg)
    d = np.array([solo[u.id].cost for u in model.users])
    print(f"everyone alone: {d.sum():.2f} c "
          f"-> cooperation saves {d.sum() - pooled.social_cost:.2f} c")

    res = allocate(d, pooled.social_cost)
    print(f"\nequal-discount split (eps0 = {res.epsilon:.4f} c):")
    for u, di, ji in zip(model.users, d, res.j):
        role = "active" if u.is_active else "passive"
        print(f"  {u.id} ({role:7s}) pays {ji:8.2f} c instead of {di:8.2f} c")


if __name__ == "__main__":
    main()
