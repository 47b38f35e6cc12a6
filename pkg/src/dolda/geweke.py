"""Joint-distribution correctness check for the Gibbs sweep.

The classifier updates are exact Gibbs for the independent per-class
probit indicator likelihood prod_l Phi(h_l)^g Phi(-h_l)^(1-g); one-hot
coding of observed labels and the normalized class probabilities belong
to data coding and prediction, not to the sampled joint.  The harness
therefore treats the full indicator matrix as the data and targets the
joint over (tau, lambda, eta, theta, phi, z, w, gamma).

Two simulators share that target.  The marginal simulator draws
everything ancestrally.  The successive simulator starts from one exact
ancestral draw (so no burn-in is needed) and alternates the production
update steps (latents, coefficients, shrinkage scales, topic sweep,
topic-word rows) with fresh data draws (w | z, phi and gamma | eta,
zbar).  If the update steps are correct conditionals, every scalar
statistic has the same distribution under both simulators; z-scores
compare their means with batch-means standard errors on the chain side.
Heavy-tailed quantities (tau, lambda, eta) enter through capped or
squashing transforms so the comparison has finite variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import rng as rngmod
from .corpus import Corpus
from .distributions import truncated_normal_one_sided
from .regression import (
    PriorFamily,
    design_matrix,
    sample_eta_class,
    sample_lambda_column,
    sample_tau,
)
from .rng import RngStream, derive_seed
from .sampler import RunConfig, init_model, z_sweep
from .topic_state import rebuild_counts, sample_phi, zbar_matrix

STAT_NAMES = (
    "mean_zbar_topic0",
    "mean_phi_word0",
    "phi_00",
    "word0_frequency",
    "indicator_mean",
    "indicator_class0_mean",
    "tau_capped_mean",
    "lambda_capped_mean",
    "eta_logsq_capped_mean",
    "intercept_tanh_mean",
    "eta_tanh_mean",
    "max_topic_share_mean",
)


@dataclass
class GewekeConfig:
    n_docs: int = 8
    vocab_size: int = 6
    n_topics: int = 2
    n_classes: int = 2
    doc_length: int = 10
    alpha: float = 0.5
    beta: float = 0.5
    prior: PriorFamily = field(default_factory=lambda: PriorFamily(kind="horseshoe", c=2.0))


@dataclass
class GewekeResult:
    stat_names: tuple[str, ...]
    marginal_mean: np.ndarray
    successive_mean: np.ndarray
    z_scores: np.ndarray
    n_marginal: int
    n_successive: int

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def table(self) -> str:
        lines = ["statistic                 marginal    successive  z-score"]
        for name, m1, m2, z in zip(
            self.stat_names, self.marginal_mean, self.successive_mean, self.z_scores
        ):
            lines.append(f"{name:<25} {m1:>10.5f} {m2:>12.5f} {z:>8.2f}")
        return "\n".join(lines)


def _rows_cat(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One categorical draw per row from unnormalized row probabilities."""
    cum = np.cumsum(prob_rows, axis=1)
    return np.minimum((u[:, None] > cum).sum(axis=1), prob_rows.shape[1] - 1)


def _statistics(zbar, phi, eta, tau, lam, w_flat, gamma) -> np.ndarray:
    return np.array(
        [
            zbar[:, 0].mean(),
            phi[:, 0].mean(),
            phi[0, 0],
            np.mean(w_flat == 0),
            gamma.mean(),
            gamma[:, 0].mean(),
            np.minimum(tau, 2.0).mean(),
            np.minimum(lam, 2.0).mean(),
            np.minimum(np.log1p(eta[1:] ** 2), 4.0).mean(),
            np.mean(np.tanh(eta[0])),
            np.mean(np.tanh(eta[1:])),
            zbar.max(axis=1).mean(),
        ]
    )


def _forward_draw(cfg: GewekeConfig, rng: np.random.Generator):
    """One exact ancestral draw of the whole joint."""
    D, K, V = cfg.n_docs, cfg.n_topics, cfg.vocab_size
    L, N = cfg.n_classes, cfg.doc_length
    theta = rng.dirichlet(np.full(K, cfg.alpha), size=D)
    phi = rng.dirichlet(np.full(V, cfg.beta), size=K)
    z = _rows_cat(np.repeat(theta, N, axis=0), rng.random(D * N))
    w = _rows_cat(phi[z], rng.random(D * N))
    zbar = np.zeros((D, K))
    np.add.at(zbar, (np.repeat(np.arange(D), N), z), 1.0 / N)
    tau = np.abs(rng.standard_cauchy(L))
    lam = np.abs(rng.standard_cauchy((K, L)))
    eta = np.empty((1 + K, L))
    eta[0] = rng.normal(0.0, cfg.prior.c, L)
    eta[1:] = rng.normal(size=(K, L)) * tau[None, :] * lam
    h = eta[0][None, :] + zbar @ eta[1:]
    gamma = rng.random((D, L)) < ndtr(h)
    return z, w, zbar, phi, eta, tau, lam, gamma


def run_geweke(
    cfg: GewekeConfig | None = None,
    n_marginal: int = 40_000,
    n_successive: int = 40_000,
    seed: int = 0,
) -> GewekeResult:
    """Run both simulators and compare all monitored statistics."""
    cfg = cfg or GewekeConfig()
    D, K, V = cfg.n_docs, cfg.n_topics, cfg.vocab_size
    L, N = cfg.n_classes, cfg.doc_length

    frng = RngStream(derive_seed(seed, 1), 0).generator()
    marg = np.empty((n_marginal, len(STAT_NAMES)))
    for i in range(n_marginal):
        z, w, zbar, phi, eta, tau, lam, gamma = _forward_draw(cfg, frng)
        marg[i] = _statistics(zbar, phi, eta, tau, lam, w, gamma)

    # chain state wired into the production data structures, initialized
    # from one exact joint draw so the chain starts in stationarity
    z, w, zbar, phi, eta, tau, lam, gamma = _forward_draw(cfg, frng)
    corpus = Corpus(
        docs=[w[d * N : (d + 1) * N].astype(np.int32) for d in range(D)],
        labels=np.zeros(D, dtype=np.int64),
        covariates=np.zeros((D, 0)),
        label_names=[str(l) for l in range(L)],
        vocab_size=V,
    )
    run_cfg = RunConfig(
        n_topics=K, iterations=1, burn_in=0, phi_mean_window=1, alpha=cfg.alpha,
        beta=cfg.beta, prior=cfg.prior, thinning=1, seed=derive_seed(seed, 2),
        workers=1,
    )
    model = init_model(corpus, run_cfg)
    topics, reg = model.topics, model.reg
    topics.z[:] = z
    dt, tw, tt = rebuild_counts(topics)
    topics.doc_topic[:] = dt
    topics.topic_word[:] = tw
    topics.topic_totals = tt
    topics.phi[:] = phi
    reg.eta[:] = eta
    reg.tau[:] = tau
    reg.lam[:] = lam

    gseed = run_cfg.seed
    rrng = RngStream(derive_seed(seed, 3), 0).generator()
    succ = np.empty((n_successive, len(STAT_NAMES)))
    for t in range(n_successive):
        # one sweep in the production phase order, with the general
        # indicator mask in place of the one-hot label coding
        zb = zbar_matrix(topics)
        design = design_matrix(zb, corpus.covariates)
        H = design @ reg.eta
        reg.a[:] = truncated_normal_one_sided(
            H, gamma, rngmod.stream(gseed, rngmod.PHASE_LATENT, t)
        )
        gram = design.T @ design
        rhs = design.T @ reg.a
        for l in range(L):
            reg.eta[:, l] = sample_eta_class(
                gram, rhs[:, l], reg.tau[l], reg.lam[:, l], cfg.prior,
                rngmod.stream(gseed, rngmod.PHASE_ETA, t, l),
            )
        if cfg.prior.kind == "horseshoe":
            for l in range(L):
                reg.tau[l] = sample_tau(
                    reg.eta[1:, l], reg.lam[:, l], reg.tau[l],
                    rngmod.stream(gseed, rngmod.PHASE_TAU, t, l),
                )
                reg.lam[:, l] = sample_lambda_column(
                    reg.eta[1:, l], reg.tau[l], reg.lam[:, l],
                    rngmod.stream(gseed, rngmod.PHASE_LAMBDA, t, l),
                )
        uniforms = rngmod.stream(gseed, rngmod.PHASE_TOPICS, t).random(D * N)
        z_sweep(model, uniforms, workers=1)
        sample_phi(topics, model.hyper, rngmod.stream(gseed, rngmod.PHASE_PHI, t))

        # regenerate the data given the new parameters
        topics.tokens[:] = _rows_cat(topics.phi[topics.z], rrng.random(D * N))
        _, tw, tt = rebuild_counts(topics)
        topics.topic_word[:] = tw
        topics.topic_totals = tt
        zb = zbar_matrix(topics)
        h = reg.eta[0][None, :] + zb @ reg.eta[1:]
        gamma = rrng.random((D, L)) < ndtr(h)
        succ[t] = _statistics(
            zb, topics.phi, reg.eta, reg.tau, reg.lam, topics.tokens, gamma
        )

    m1 = marg.mean(axis=0)
    se1 = marg.std(axis=0, ddof=1) / np.sqrt(n_marginal)
    n_batch = 50
    usable = n_successive - n_successive % n_batch
    batches = succ[:usable].reshape(n_batch, -1, len(STAT_NAMES)).mean(axis=1)
    m2 = succ.mean(axis=0)
    se2 = batches.std(axis=0, ddof=1) / np.sqrt(n_batch)
    z_scores = (m1 - m2) / np.sqrt(se1**2 + se2**2)
    return GewekeResult(
        stat_names=STAT_NAMES,
        marginal_mean=m1,
        successive_mean=m2,
        z_scores=z_scores,
        n_marginal=n_marginal,
        n_successive=n_successive,
    )
