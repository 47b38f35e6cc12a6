"""Sampling primitives used by the Gibbs sweeps.

Each sampler here is small enough to check against an analytic CDF or a
brute-force rejection oracle, and the test suite does exactly that.  All
routines take an explicit ``numpy.random.Generator`` so draws stay tied to
the addressable streams in :mod:`dolda.rng`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammainc, gammaincinv, ndtr, ndtri

# Gamma/exponential rates are clamped below at this floor before inversion;
# keeps the inverse-CDF step finite when a coefficient is numerically zero.
RATE_FLOOR = 1e-10

# Below this orthant probability the inverse-CDF route runs out of float
# resolution and we switch to tail rejection (kicks in around |mean| > 37).
_TAIL_PROB_MIN = 1e-300

_POSITIVE_FLOOR = 1e-300


class NotSPDError(np.linalg.LinAlgError):
    """Precision matrix passed to the Gaussian sampler is not positive definite."""


def _robert_tail(lower: float, rng: np.random.Generator) -> float:
    # Standard normal truncated to (lower, inf) for large positive lower:
    # translated-exponential proposal with the optimal rate, Robert (1995).
    alpha = 0.5 * (lower + np.sqrt(lower * lower + 4.0))
    while True:
        x = lower - np.log1p(-rng.random()) / alpha
        diff = x - alpha
        if np.log1p(-rng.random()) <= -0.5 * diff * diff:
            # accept with prob exp(-(x-alpha)^2/2); log form avoids underflow
            return x


def truncated_normal_one_sided(
    means: np.ndarray, positive: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``x_i ~ N(means_i, 1)`` restricted to the positive half-line where
    ``positive_i`` is true and to the negative half-line otherwise.

    Vectorized inverse-CDF in the body of the distribution, with a rejection
    fallback once the kept tail mass underflows double precision.
    """
    means = np.asarray(means, dtype=np.float64)
    if not np.all(np.isfinite(means)):
        raise ValueError("truncated normal requires finite means")
    positive = np.broadcast_to(np.asarray(positive, dtype=bool), means.shape)

    # Reduce to the positive-side problem: X ~ N(m, 1) on (0, inf).
    m = np.where(positive, means, -means)
    keep = ndtr(m)  # P(X > 0) = Phi(m)
    u = rng.random(m.shape)
    out = np.empty_like(m)

    ok = keep >= _TAIL_PROB_MIN
    if np.any(ok):
        # Survival inversion: X = m - ndtri((1-u) * Phi(m)); 1-u in (0, 1]
        # keeps the argument strictly positive.
        arg = (1.0 - u[ok]) * keep[ok]
        out[ok] = m[ok] - ndtri(arg)
    if not np.all(ok):
        flat = out.reshape(-1)
        mflat = m.reshape(-1)
        for i in np.flatnonzero(~ok.reshape(-1)):
            flat[i] = mflat[i] + _robert_tail(-mflat[i], rng)

    np.maximum(out, _POSITIVE_FLOOR, out=out)
    return np.where(positive, out, -out)


def sample_truncated_normal(mean: float, side: str, rng: np.random.Generator) -> float:
    """One draw from N(mean, 1) restricted to a half-line.

    ``side`` is ``"positive"`` for (0, inf) or ``"negative"`` for (-inf, 0).
    """
    if side not in ("positive", "negative"):
        raise ValueError(f"side must be 'positive' or 'negative', got {side!r}")
    if not np.isfinite(mean):
        raise ValueError("truncated normal requires a finite mean")
    x = truncated_normal_one_sided(
        np.array([mean]), np.array([side == "positive"]), rng
    )
    return float(x[0])


def sample_dirichlet(concentration: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw via normalized gammas, with a redraw guard for the
    all-underflow corner that ``rng.dirichlet`` would turn into NaN."""
    conc = np.asarray(concentration, dtype=np.float64)
    if conc.ndim != 1 or conc.size == 0:
        raise ValueError("concentration must be a non-empty 1-d array")
    if not np.all(np.isfinite(conc)) or np.any(conc <= 0.0):
        raise ValueError("concentration entries must be finite and positive")
    if conc.size == 1:
        return np.ones(1)
    for _ in range(100):
        g = rng.standard_gamma(conc)
        total = g.sum()
        if total > 0.0 and np.isfinite(total):
            return g / total
    raise ValueError("Dirichlet draw degenerate: all gamma components underflowed")


def sample_categorical_unnormalized(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Index draw proportional to non-negative, not necessarily normalized
    weights.  Sequential cumulative-sum inversion, matching the token kernel."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d array")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and non-negative")
    cum = np.cumsum(w)
    total = cum[-1]
    if total <= 0.0:
        raise ValueError("weights sum to zero")
    u = rng.random() * total
    return int(np.searchsorted(cum, u, side="right"))


def sample_mvn_by_precision(
    precision: np.ndarray, linear_term: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw from N(Q^{-1} b, Q^{-1}) given precision Q and linear term b.

    One Cholesky of Q serves both the mean solve and the noise solve.
    Raises :class:`NotSPDError` when Q has no Cholesky factor.
    """
    Q = np.asarray(precision, dtype=np.float64)
    b = np.asarray(linear_term, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("precision must be square")
    if b.shape != (Q.shape[0],):
        raise ValueError("linear term length does not match precision")
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(b))):
        raise ValueError("precision and linear term must be finite")
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("precision matrix is not positive definite") from exc
    # mean = Q^{-1} b through the factor: L w = b, L^T mu = w
    w = solve_triangular(L, b, lower=True, check_finite=False)
    mu = solve_triangular(L, w, lower=True, trans="T", check_finite=False)
    z = rng.standard_normal(b.shape[0])
    return mu + solve_triangular(L, z, lower=True, trans="T", check_finite=False)


def sample_truncated_gamma_inverse(
    shape: float, rate: float, upper: float, rng: np.random.Generator
) -> float:
    """Gamma(shape, rate) draw restricted to (0, upper) by CDF inversion.

    The rate is floored at ``RATE_FLOOR``.  When the truncated mass
    underflows entirely, the x^{shape-1} power-law limit of the density on
    (0, upper) is sampled instead.
    """
    if not (np.isfinite(shape) and shape > 0.0):
        raise ValueError("shape must be finite and positive")
    if not upper > 0.0:
        raise ValueError("upper truncation bound must be positive")
    rate = max(float(rate), RATE_FLOOR)
    u = rng.random()
    cap = gammainc(shape, rate * upper) if np.isfinite(upper) else 1.0
    q = u * cap
    if q <= 0.0:
        # rate*upper so small the CDF underflows; density is ~ x^{shape-1}
        x = upper * u ** (1.0 / shape)
        return max(float(x), _POSITIVE_FLOOR)
    x = gammaincinv(shape, q) / rate
    x = min(float(x), float(upper))
    return max(x, _POSITIVE_FLOOR)


def sample_truncated_exponential(rate: float, upper: float, rng: np.random.Generator) -> float:
    """Exponential(rate) draw restricted to (0, upper) by CDF inversion.

    The rate is floored at ``RATE_FLOOR``; as rate -> 0 the draw tends to
    Uniform(0, upper), which is the correct limit.
    """
    if not upper > 0.0:
        raise ValueError("upper truncation bound must be positive")
    rate = max(float(rate), RATE_FLOOR)
    u = rng.random()
    cap = -np.expm1(-rate * upper) if np.isfinite(upper) else 1.0
    x = -np.log1p(-u * cap) / rate
    x = min(float(x), float(upper))
    return max(x, _POSITIVE_FLOOR)
