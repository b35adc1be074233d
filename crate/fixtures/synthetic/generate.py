"""Regenerate the synthetic two-sector price fixture.

Each sector has two correlated groups of tickers driven by a sector factor,
a group factor and idiosyncratic noise. Business days only.
"""
import pathlib

import numpy as np
import pandas as pd

HERE = pathlib.Path(__file__).parent
SECTORS = {
    "alpha": [["ALPA", "ALPB"], ["ALPC", "ALPD"]],
    "beta": [["BETA", "BETB", "BETC"], ["BETD", "BETE"]],
}

rng = np.random.default_rng(20190701)
dates = pd.bdate_range("2019-07-01", "2023-06-30")
out = HERE / "data"
out.mkdir(exist_ok=True)
for sector, groups in SECTORS.items():
    sector_factor = rng.normal(0.0003, 0.008, len(dates))
    for g, tickers in enumerate(groups):
        group_factor = rng.normal(0.0, 0.006 + 0.002 * g, len(dates))
        for t in tickers:
            drift = rng.uniform(-0.0002, 0.0008)
            noise = rng.normal(0.0, rng.uniform(0.005, 0.015), len(dates))
            r = drift + sector_factor + group_factor + noise
            price = 100.0 * np.cumprod(1.0 + r)
            frame = pd.DataFrame({"Date": dates.strftime("%Y-%m-%d"), "Close": np.round(price, 4)})
            frame.to_csv(out / f"{t}.csv", index=False)
