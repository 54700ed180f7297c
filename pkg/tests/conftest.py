import datetime as dt

import numpy as np
import pytest

import epfq


@pytest.fixture(scope="session")
def market():
    """Small synthetic market shared by read-only tests."""
    return epfq.generate_synthetic_market(seed=7, n_days=320)


@pytest.fixture(scope="session")
def market_surfaces(market):
    """QR/HS surfaces on a T11 grid with a short window, for model tests."""
    n = 60
    grid = epfq.make_grid("T11", n)
    first = market.prices.first_day + dt.timedelta(days=n)
    out = {}
    for var in ("Load", "Solar", "Wind", "RES", "ResLoad"):
        for method in ("HS", "QR", "ReLU"):
            out[(var, method)] = epfq.build_surface(
                var, market.forecasts[var], market.actuals[var], method,
                grid, n_window=n, first_day=first)
    return out


def pinball(q, x, tau):
    """Reference check loss, written independently of the package."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.where(x < q, (1 - tau) * (q - x), tau * (x - q))
