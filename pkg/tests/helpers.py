"""Shared oracle utilities for the test suite."""

import numpy as np
from scipy.integrate import cumulative_trapezoid


def grid_cdf_xi(shape, rate, n_grid=400_000):
    """Numeric CDF of the slice samplers' stationary xi distribution.

    Both shrinkage updates are slice samplers on xi = 1/scale^2 whose
    stationary density is the gamma kernel damped by the half-Cauchy
    Jacobian factor:

        p(xi) ∝ xi^(shape-1) * exp(-rate*xi) / (1+xi)

    Returns (grid, cdf) suitable for a KS test against chain draws of xi.
    """
    xi_max = (shape + 20.0 * np.sqrt(shape)) / max(rate, 1e-3) + 50.0
    grid = np.linspace(1e-12, xi_max, n_grid)
    logp = (shape - 1.0) * np.log(grid) - rate * grid - np.log1p(grid)
    logp -= logp.max()
    dens = np.exp(logp)
    cdf = cumulative_trapezoid(dens, grid, initial=0.0)
    cdf /= cdf[-1]
    return grid, cdf


def ks_against_grid(xi_draws, grid, cdf):
    """One-sample KS statistic and p-value against a gridded CDF."""
    from scipy import stats

    def interp_cdf(x):
        return np.interp(x, grid, cdf, left=0.0, right=1.0)

    return stats.kstest(xi_draws, interp_cdf)
