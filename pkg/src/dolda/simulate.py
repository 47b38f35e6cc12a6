"""Ancestral simulation of the full generative process.

Produces synthetic corpora with known parameters for the recover-the-truth
experiments, and doubles as the reference description of the model: topics
from a symmetric Dirichlet, coefficients from the horseshoe (or plain
normal) hierarchy, token assignments through per-document topic
proportions, and labels from the class probabilities implied by the
per-class normal CDFs of the linear scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .corpus import Corpus
from .regression import PriorFamily, design_matrix, do_class_probabilities

_SCALE_MAX = 1e150


@dataclass
class SimulatedCorpus:
    """Synthetic corpus plus every latent quantity that generated it."""

    corpus: Corpus
    theta: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    tau: np.ndarray | None
    lam: np.ndarray | None
    linear: np.ndarray
    class_probs: np.ndarray


def _rows_categorical(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized categorical draw, one row of probabilities per draw."""
    cum = np.cumsum(prob_rows, axis=1)
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


def draw_prior_coefficients(
    n_topics: int,
    n_covariates: int,
    n_classes: int,
    prior: PriorFamily,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Coefficient matrix from the prior hierarchy.

    Intercepts are N(0, c^2) under either family.  Horseshoe scales are
    clipped at the same huge ceiling the sampler enforces, so simulation
    and inference target the same (numerically representable) model.
    """
    m = n_topics + n_covariates
    eta = np.empty((1 + m, n_classes))
    eta[0, :] = prior.c * rng.standard_normal(n_classes)
    if prior.kind == "horseshoe":
        tau = np.minimum(np.abs(rng.standard_cauchy(n_classes)), _SCALE_MAX)
        lam = np.minimum(np.abs(rng.standard_cauchy((m, n_classes))), _SCALE_MAX)
        scale = np.minimum(tau[None, :] * lam, _SCALE_MAX)
        eta[1:, :] = scale * rng.standard_normal((m, n_classes))
        return eta, tau, lam
    eta[1:, :] = prior.c * rng.standard_normal((m, n_classes))
    return eta, None, None


def forward_simulate(
    n_docs: int,
    doc_length,
    vocab_size: int,
    n_topics: int,
    n_classes: int,
    alpha: float = 0.1,
    beta: float = 0.01,
    prior: PriorFamily | None = None,
    covariates: np.ndarray | None = None,
    phi: np.ndarray | None = None,
    eta: np.ndarray | None = None,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> SimulatedCorpus:
    """Simulate a labeled corpus from the model.

    ``doc_length`` is a scalar or a per-document array.  ``phi`` and
    ``eta`` may be planted to control topic separation and signal
    strength; when ``eta`` is given the scale hierarchy is skipped.
    """
    if rng is None:
        rng = rngmod.stream(seed, rngmod.PHASE_SIMULATE)
    prior = prior or PriorFamily()
    lengths = np.broadcast_to(np.asarray(doc_length, dtype=np.int64), (n_docs,))
    if np.any(lengths < 0):
        raise ValueError("doc_length must be non-negative")
    X = np.zeros((n_docs, 0)) if covariates is None else np.asarray(covariates, float)
    n_cov = X.shape[1]

    if phi is None:
        g = rng.standard_gamma(beta, size=(n_topics, vocab_size))
        totals = g.sum(axis=1)
        while np.any(totals <= 0.0):
            bad = totals <= 0.0
            g[bad] = rng.standard_gamma(beta, size=(int(bad.sum()), vocab_size))
            totals = g.sum(axis=1)
        phi = g / totals[:, None]
    else:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (n_topics, vocab_size):
            raise ValueError("planted phi has the wrong shape")

    tau = lam = None
    if eta is None:
        eta, tau, lam = draw_prior_coefficients(n_topics, n_cov, n_classes, prior, rng)
    else:
        eta = np.asarray(eta, dtype=np.float64)
        if eta.shape != (1 + n_topics + n_cov, n_classes):
            raise ValueError("planted eta has the wrong shape")

    theta = rng.standard_gamma(alpha, size=(n_docs, n_topics))
    ttot = theta.sum(axis=1)
    while np.any(ttot <= 0.0):
        bad = ttot <= 0.0
        theta[bad] = rng.standard_gamma(alpha, size=(int(bad.sum()), n_topics))
        ttot = theta.sum(axis=1)
    theta /= ttot[:, None]

    cum_phi = np.cumsum(phi, axis=1)
    docs: list[np.ndarray] = []
    zbar = np.zeros((n_docs, n_topics))
    for d in range(n_docs):
        n_d = int(lengths[d])
        if n_d == 0:
            docs.append(np.zeros(0, dtype=np.int32))
            continue
        z = _rows_categorical(np.broadcast_to(theta[d], (n_d, n_topics)), rng.random(n_d))
        w = np.empty(n_d, dtype=np.int32)
        u = rng.random(n_d)
        for k in np.unique(z):
            mask = z == k
            w[mask] = np.searchsorted(cum_phi[k], u[mask], side="right")
        np.minimum(w, vocab_size - 1, out=w)
        counts = np.bincount(z, minlength=n_topics)
        zbar[d] = counts / n_d
        docs.append(w)

    design = design_matrix(zbar, X)
    linear = design @ eta
    probs = do_class_probabilities(linear)
    y = _rows_categorical(probs, rng.random(n_docs))

    corpus = Corpus(
        docs=docs,
        labels=y.astype(np.int64),
        covariates=X,
        label_names=[str(l) for l in range(n_classes)],
        vocab_size=vocab_size,
    )
    return SimulatedCorpus(
        corpus=corpus, theta=theta, phi=phi, eta=eta, tau=tau, lam=lam,
        linear=linear, class_probs=probs,
    )
