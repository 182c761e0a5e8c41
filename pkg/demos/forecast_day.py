"""Weather-conditioned generation forecasts from the shipped pools."""

import numpy as np

from gridbargain import build_pools, data_path, load_experiment
from gridbargain.rg_forecast import WeatherForecast, predict_rg

SUNNY_BREEZY = WeatherForecast(solar=(0.8, 0.2, 0.0), wind=(0.0, 0.3, 0.7, 0.0))
GRAY_STILL = WeatherForecast(solar=(0.0, 0.2, 0.8), wind=(0.5, 0.5, 0.0, 0.0))


def sparkline(p, width=24):
    blocks = " .:-=+*#%@"
    hi = max(float(p.max()), 1e-9)
    return "".join(blocks[int(v / hi * (len(blocks) - 1))] for v in p[:width])


def main():
    config = load_experiment(data_path("experiment.yaml"))
    pools = build_pools(config)
    for label, fc in (("sunny and breezy", SUNNY_BREEZY), ("gray and still", GRAY_STILL)):
        print(f"\ntomorrow looks {label}:")
        for uid in sorted(pools):
            p = predict_rg(pools[uid], fc)
            print(f"  {uid} ({pools[uid].kind})  {sparkline(p)}  "
                  f"{np.sum(p):6.2f} kWh expected")


if __name__ == "__main__":
    main()
