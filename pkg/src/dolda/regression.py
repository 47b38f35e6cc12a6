"""Diagonal-orthant probit regression with per-class shrinkage.

The classifier couples each class to its own binary probit through latent
variables constrained to orthants: the latent for the observed class is
positive, all others negative.  Coefficients get either a horseshoe prior
(global scale tau_l, local scales lambda_{p,l}, both half-Cauchy) or a
plain normal prior; the intercept always stays on a fixed-variance normal
prior and is excluded from shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from . import rng as rngmod
from .distributions import (
    NotSPDError,
    sample_mvn_by_precision,
    sample_truncated_exponential,
    sample_truncated_gamma_inverse,
    truncated_normal_one_sided,
)

_JITTER = 1e-8
_SCALE_MAX = 1e150


@dataclass
class PriorFamily:
    """Coefficient prior: 'horseshoe' or 'normal' with std dev c."""

    kind: str = "horseshoe"
    c: float = 100.0

    def __post_init__(self) -> None:
        if self.kind not in ("horseshoe", "normal"):
            raise ValueError(f"unknown prior family {self.kind!r}")
        if not (self.c > 0.0 and np.isfinite(self.c)):
            raise ValueError("prior scale c must be positive and finite")


@dataclass
class RegressionState:
    """Classifier-side state.

    eta is (1+K+P) x L with the intercept in row 0; a is D x L; tau is per
    class; lam is (K+P) x L, local scales for all shrunk coefficients.
    """

    eta: np.ndarray
    a: np.ndarray
    tau: np.ndarray
    lam: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.eta.shape[1]

    @property
    def n_coef(self) -> int:
        return self.eta.shape[0]


def init_regression(
    n_coef: int, n_classes: int, n_docs: int, rng: np.random.Generator
) -> RegressionState:
    """All-ones scales, small random coefficients, latents from the prior
    predictive at eta=0 (so they respect no orthant yet)."""
    return RegressionState(
        eta=0.01 * rng.standard_normal((n_coef, n_classes)),
        a=rng.standard_normal((n_docs, n_classes)),
        tau=np.ones(n_classes),
        lam=np.ones((n_coef - 1, n_classes)),
    )


def design_row(zbar_d: np.ndarray, x_d: np.ndarray) -> np.ndarray:
    """Per-document regression features: intercept, topic shares, covariates."""
    return np.concatenate(([1.0], zbar_d, x_d))


def design_matrix(zbar: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    """Stacked design rows for a whole corpus."""
    d = zbar.shape[0]
    return np.hstack([np.ones((d, 1)), zbar, covariates])


def sample_latents(
    state: RegressionState,
    labels: np.ndarray,
    design: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Redraw the orthant-constrained latents given labels and coefficients.

    For document d with label y the latent a[d, y] is truncated positive
    and every other a[d, l] truncated negative.  Rows with label -1
    (unlabeled) are left untouched.
    """
    H = design @ state.eta
    L = state.n_classes
    valid = labels >= 0
    positive = np.zeros((labels.size, L), dtype=bool)
    positive[np.flatnonzero(valid), labels[valid]] = True
    draws = truncated_normal_one_sided(H, positive, rng)
    state.a[valid] = draws[valid]
    return state.a


def prior_precision_diagonal(
    prior: PriorFamily, tau_l: float, lam_col: np.ndarray
) -> np.ndarray:
    """Diagonal of the coefficient prior precision for one class.

    Row 0 (intercept) is 1/c^2 under either family; the rest are
    1/(tau^2 lambda^2) under the horseshoe and 1/c^2 under the normal.
    """
    n_coef = lam_col.size + 1
    out = np.empty(n_coef, dtype=np.float64)
    out[0] = 1.0 / (prior.c * prior.c)
    if prior.kind == "horseshoe":
        scale2 = np.minimum(tau_l * lam_col, _SCALE_MAX) ** 2
        out[1:] = 1.0 / np.maximum(scale2, 1e-300)
    else:
        out[1:] = 1.0 / (prior.c * prior.c)
    return out


def sample_eta_class(
    gram: np.ndarray,
    rhs: np.ndarray,
    tau_l: float,
    lam_col: np.ndarray,
    prior: PriorFamily,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one class's coefficient column from its Gaussian conditional.

    gram is design^T design (shared across classes within an iteration)
    and rhs is design^T a[:, l].  Retries once with a small diagonal
    jitter if the precision fails its Cholesky.
    """
    Q = gram + np.diag(prior_precision_diagonal(prior, tau_l, lam_col))
    try:
        return sample_mvn_by_precision(Q, rhs, rng)
    except NotSPDError:
        Q = Q + _JITTER * np.eye(Q.shape[0])
        return sample_mvn_by_precision(Q, rhs, rng)


def sample_tau(
    eta_shrunk: np.ndarray, lam_col: np.ndarray, tau_prev: float, rng: np.random.Generator
) -> float:
    """Slice update of one class's global scale.

    Works on xi = 1/tau^2: a uniform slice variable bounds xi above, then
    xi is a truncated gamma with shape (m+1)/2 (m shrunk coefficients) and
    rate half the sum of squared lambda-standardized coefficients.
    """
    m = eta_shrunk.size
    xi_prev = 1.0 / (tau_prev * tau_prev)
    u = rng.random() / (1.0 + xi_prev)
    bound = np.inf if u <= 0.0 else (1.0 - u) / u
    rate = 0.5 * float(np.sum((eta_shrunk / lam_col) ** 2))
    xi = sample_truncated_gamma_inverse(0.5 * (m + 1), rate, bound, rng)
    return min(float(1.0 / np.sqrt(xi)), _SCALE_MAX)


def sample_lambda(
    eta_p: float, tau_l: float, lam_prev: float, rng: np.random.Generator
) -> float:
    """Slice update of a single local scale (same scheme as tau, with the
    gamma shape collapsing to an exponential)."""
    xi_prev = 1.0 / (lam_prev * lam_prev)
    u = rng.random() / (1.0 + xi_prev)
    bound = np.inf if u <= 0.0 else (1.0 - u) / u
    rate = 0.5 * (eta_p / tau_l) ** 2
    xi = sample_truncated_exponential(rate, bound, rng)
    return min(float(1.0 / np.sqrt(xi)), _SCALE_MAX)


def sample_lambda_column(
    eta_shrunk: np.ndarray, tau_l: float, lam_prev: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized local-scale update for one class (one stream, all rows)."""
    from .distributions import RATE_FLOOR

    xi_prev = 1.0 / (lam_prev * lam_prev)
    u = rng.random(eta_shrunk.size) / (1.0 + xi_prev)
    with np.errstate(divide="ignore"):
        bound = np.where(u > 0.0, (1.0 - u) / np.maximum(u, 1e-300), np.inf)
    rate = np.maximum(0.5 * (eta_shrunk / tau_l) ** 2, RATE_FLOOR)
    cap = -np.expm1(-rate * bound)
    u2 = rng.random(eta_shrunk.size)
    xi = -np.log1p(-u2 * cap) / rate
    xi = np.clip(xi, 1e-300, bound)
    return np.minimum(1.0 / np.sqrt(xi), _SCALE_MAX)


def do_class_probabilities(linear: np.ndarray) -> np.ndarray:
    """Class probabilities from linear scores: softmax of the log normal
    CDFs, i.e. Phi(h_l) normalized across classes."""
    linear = np.asarray(linear, dtype=np.float64)
    logp = log_ndtr(linear)
    if linear.ndim == 1:
        return np.exp(logp - logsumexp(logp))
    return np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))


def do_log_likelihood(linear: np.ndarray, labels: np.ndarray | None = None) -> float:
    """Classifier fit term.

    With labels: sum over documents of log P(y_d | h_d) under the
    one-positive-orthant augmentation, log Phi(h_y) + sum_{l != y}
    log Phi(-h_l).  Without labels: each document contributes the log of
    its total single-positive-orthant mass (summed over classes), the
    normalizing constant of the same model.
    """
    linear = np.asarray(linear, dtype=np.float64)
    logF = log_ndtr(linear)
    logFneg = log_ndtr(-linear)
    neg_row = logFneg.sum(axis=1)
    if labels is not None:
        labels = np.asarray(labels)
        valid = labels >= 0
        rows = np.flatnonzero(valid)
        y = labels[valid]
        return float(np.sum(logF[rows, y] - logFneg[rows, y] + neg_row[rows]))
    per_class = logF - logFneg + neg_row[:, None]
    return float(np.sum(logsumexp(per_class, axis=1)))


@dataclass
class ProbitFit:
    """Posterior summary from the standalone classifier."""

    eta_mean: np.ndarray
    eta_draws: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    state: RegressionState = field(repr=False)


def fit_do_probit(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    prior: PriorFamily,
    iterations: int = 1000,
    burn_in: int = 500,
    thinning: int = 1,
    seed: int = 0,
) -> ProbitFit:
    """Gibbs sampler for the classifier alone (fixed features, no topics).

    Useful on non-text designs and as the second stage of a two-step
    topics-then-classifier baseline.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.size:
        raise ValueError("features must be 2-d with one row per label")
    if iterations <= burn_in:
        raise ValueError("iterations must exceed burn_in")
    d, p = features.shape
    design = np.hstack([np.ones((d, 1)), features])
    gram = design.T @ design
    state = init_regression(p + 1, n_classes, d, rngmod.stream(seed, rngmod.PHASE_INIT, 0, 1))

    draws = []
    for it in range(iterations):
        sample_latents(state, labels, design, rngmod.stream(seed, rngmod.PHASE_LATENT, it))
        rhs_all = design.T @ state.a
        for l in range(n_classes):
            state.eta[:, l] = sample_eta_class(
                gram, rhs_all[:, l], state.tau[l], state.lam[:, l], prior,
                rngmod.stream(seed, rngmod.PHASE_ETA, it, l),
            )
        if prior.kind == "horseshoe":
            for l in range(n_classes):
                state.tau[l] = sample_tau(
                    state.eta[1:, l], state.lam[:, l], state.tau[l],
                    rngmod.stream(seed, rngmod.PHASE_TAU, it, l),
                )
                state.lam[:, l] = sample_lambda_column(
                    state.eta[1:, l], state.tau[l], state.lam[:, l],
                    rngmod.stream(seed, rngmod.PHASE_LAMBDA, it, l),
                )
        if it >= burn_in and (it - burn_in) % thinning == 0:
            draws.append(state.eta.copy())

    eta_draws = np.stack(draws)
    return ProbitFit(
        eta_mean=eta_draws.mean(axis=0),
        eta_draws=eta_draws,
        tau=state.tau.copy(),
        lam=state.lam.copy(),
        state=state,
    )
