"""Pick an ARIMA order for annual storm counts by holdout error.

    python3 demos/arima_order_search.py

Annual counts are simulated as a slowly drifting Poisson rate. The grid
search logs one line per candidate order, and the winner is refitted on the
full series to forecast the next ten years.
"""

import logging

import numpy as np

from stormsynth import arima

logging.basicConfig(level=logging.INFO, format="%(message)s")

rng = np.random.default_rng(4)
years = np.arange(1975, 2011)
rate = 5 + 2 * np.sin((years - 1975) / 6.0)
counts = rng.poisson(rate).astype(float)

order = arima.grid_search(counts, 3, 1, 2, holdout=8, reference=arima.ArimaOrder(4, 1, 1))
model = arima.fit(counts, order)
print(f"\nselected ARIMA{order}")
for year, raw, n in zip(range(2011, 2021), arima.forecast(model, 10),
                        arima.forecast_counts(model, 10)):
    print(f"{year}: {raw:6.2f} -> {n}")
