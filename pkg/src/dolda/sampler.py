"""Gibbs sweep orchestration.

One iteration updates, in order: the orthant latents a, the coefficient
columns eta (class by class), the global scales tau, the local scales
lambda, every token's topic assignment z (documents fanned out to worker
threads), and the topic-word rows phi.  Theta never appears: it is
integrated out, which is what makes the z phase parallel over documents
once phi is held fixed for the sweep.

The supervised part of each token weight is cached per document and
updated in O(K) per token through the K x K coefficient cross-product;
`compute_g_full` is the from-scratch definition the cache must agree with.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import rng as rngmod
from ._kernels import sweep_docs_cached, sweep_docs_naive
from .corpus import Corpus
from .regression import (
    PriorFamily,
    RegressionState,
    design_matrix,
    do_log_likelihood,
    init_regression,
    sample_eta_class,
    sample_latents,
    sample_lambda_column,
    sample_tau,
)
from .serialize import load_bundle, save_bundle
from .topic_state import Hyper, TopicState, init_random, sample_phi, zbar_matrix


class SamplerAbort(RuntimeError):
    """Unrecoverable numerical failure inside a sweep."""


@dataclass
class RunConfig:
    """Everything a training run needs besides the corpus itself."""

    n_topics: int
    iterations: int
    burn_in: int
    phi_mean_window: int
    alpha: float = 0.1
    beta: float = 0.01
    prior: PriorFamily = field(default_factory=PriorFamily)
    thinning: int = 5
    seed: int = 0
    workers: int = 1
    supervised: bool = True
    checkpoint_every: int = 0
    predict_passes: int = 200
    predict_burn: int = 100

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if not 1 <= self.phi_mean_window <= self.iterations - self.burn_in:
            raise ValueError("phi_mean_window must lie in [1, iterations - burn_in]")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 < self.predict_burn < self.predict_passes:
            raise ValueError("predict_burn must lie in (0, predict_passes)")

    def hyper(self) -> Hyper:
        return Hyper(n_topics=self.n_topics, alpha=self.alpha, beta=self.beta)


@dataclass
class ModelState:
    """Complete sampler state for one corpus."""

    corpus: Corpus
    topics: TopicState
    reg: RegressionState | None
    hyper: Hyper
    prior: PriorFamily
    iteration: int = 0

    @property
    def supervised(self) -> bool:
        return self.reg is not None


def init_model(corpus: Corpus, config: RunConfig) -> ModelState:
    """Random initial state; supervised parts only when labels exist."""
    hyper = config.hyper()
    topics = init_random(corpus, hyper, rngmod.stream(config.seed, rngmod.PHASE_INIT, 0, 0))
    reg = None
    if config.supervised:
        if corpus.n_classes < 1:
            raise ValueError("supervised run requires labeled documents")
        n_coef = 1 + config.n_topics + corpus.n_covariates
        reg = init_regression(
            n_coef, corpus.n_classes, corpus.n_docs,
            rngmod.stream(config.seed, rngmod.PHASE_INIT, 0, 1),
        )
    return ModelState(
        corpus=corpus, topics=topics, reg=reg, hyper=hyper, prior=config.prior
    )


def compute_eta_cross(eta: np.ndarray, n_topics: int) -> np.ndarray:
    """K x K cross-products of the topic-block coefficient rows,
    S[k, k'] = sum_l eta[1+k, l] * eta[1+k', l]."""
    topic_rows = eta[1 : 1 + n_topics, :]
    return topic_rows @ topic_rows.T


def compute_g_full(
    k: int,
    zbar_excl: np.ndarray,
    x_d: np.ndarray,
    a_row: np.ndarray,
    eta: np.ndarray,
    n_d: int,
) -> float:
    """Supervised log-weight of topic k for one token, from scratch.

    zbar_excl is the document's topic proportion vector with the current
    token removed from the counts but the denominator still n_d.  Equals
    -0.5 * sum_l [ -2 (eta_kl / n_d) r_l + (eta_kl / n_d)^2 ] with
    r_l the residual of a against the excluded-token linear score.
    """
    if n_d < 1:
        raise ValueError("n_d must be at least 1")
    K = zbar_excl.size
    row = np.concatenate(([1.0], zbar_excl, x_d))
    pred = row @ eta
    coef = eta[1 + k, :] / n_d
    return float(np.sum(coef * (a_row - pred)) - 0.5 * np.sum(coef * coef))


def compute_g_all(
    zbar_excl: np.ndarray,
    x_d: np.ndarray,
    a_row: np.ndarray,
    eta: np.ndarray,
    n_d: int,
) -> np.ndarray:
    """Vector of compute_g_full over all topics."""
    K = zbar_excl.size
    row = np.concatenate(([1.0], zbar_excl, x_d))
    resid = a_row - row @ eta
    topic_rows = eta[1 : 1 + K, :] / n_d
    return topic_rows @ resid - 0.5 * np.sum(topic_rows * topic_rows, axis=1)


def update_g_incremental(
    g_prev: np.ndarray,
    eta_cross: np.ndarray,
    z_old: int,
    z_new: int,
    n_d: int,
) -> np.ndarray:
    """Move the excluded-token g cache from token i to token i+1.

    g_prev excludes a token assigned to z_old; reinserting it at z_new and
    excluding the next token (same topic either way, by convention applied
    by the caller) shifts g by (S[:, z_old] - S[:, z_new]) / n_d^2.
    """
    if z_old == z_new:
        return g_prev.copy()
    return g_prev + (eta_cross[:, z_old] - eta_cross[:, z_new]) / (n_d * n_d)


def sample_z_document(
    d: int,
    topics: TopicState,
    hyper: Hyper,
    eta: np.ndarray | None,
    a_row: np.ndarray | None,
    x_d: np.ndarray | None,
    uniforms: np.ndarray,
) -> None:
    """Reference (pure numpy) token sweep for one document.

    Consumes exactly one uniform per token, mirroring the compiled kernel;
    exists for oracle tests and as the readable statement of the update.
    """
    lo = topics.offsets[d]
    n_d = int(topics.doc_lengths[d])
    if n_d == 0:
        return
    K = topics.n_topics
    supervised = eta is not None
    if supervised:
        eta_cross = compute_eta_cross(eta, K)
    for i in range(n_d):
        idx = lo + i
        v = int(topics.tokens[idx])
        z_old = int(topics.z[idx])
        topics.doc_topic[d, z_old] -= 1
        topics.topic_word[z_old, v] -= 1
        topics.topic_totals[z_old] -= 1
        if supervised:
            zbar_excl = topics.doc_topic[d].astype(np.float64) / n_d
            g = compute_g_all(zbar_excl, x_d, a_row, eta, n_d)
            g = g - g.max()
            weights = topics.phi[:, v] * (topics.doc_topic[d] + hyper.alpha) * np.exp(g)
        else:
            weights = topics.phi[:, v] * (topics.doc_topic[d] + hyper.alpha)
        cum = np.cumsum(weights)
        total = cum[-1]
        if not total > 0.0:
            raise SamplerAbort(f"document {d}: token weights degenerated to zero")
        z_new = int(np.searchsorted(cum, uniforms[i] * total, side="right"))
        z_new = min(z_new, K - 1)
        topics.z[idx] = z_new
        topics.doc_topic[d, z_new] += 1
        topics.topic_word[z_new, v] += 1
        topics.topic_totals[z_new] += 1


def _supervision_arrays(
    model: ModelState,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Kernel-layout views of the classifier state (empty when unsupervised)."""
    K = model.topics.n_topics
    D = model.corpus.n_docs
    if model.reg is None:
        eta_lt = np.zeros((0, K), dtype=np.float64)
        return eta_lt, np.zeros((D, 0)), np.zeros((D, 0)), np.zeros((K, K))
    eta = model.reg.eta
    eta_lt = np.ascontiguousarray(eta[1 : 1 + K, :].T)
    base = eta[0, :][None, :] + model.corpus.covariates @ eta[1 + K :, :]
    base = np.ascontiguousarray(np.broadcast_to(base, (D, eta.shape[1])))
    cross = np.ascontiguousarray(eta_lt.T @ eta_lt)
    return eta_lt, base, model.reg.a, cross


def z_sweep(
    model: ModelState,
    uniforms: np.ndarray,
    workers: int = 1,
    naive: bool = False,
) -> None:
    """One full token sweep, fanned out over contiguous document blocks.

    Workers mutate disjoint doc_topic rows and accumulate private
    topic-word deltas that are merged afterwards, so the result is
    identical for any worker count.
    """
    topics = model.topics
    D = topics.n_docs
    K, V = topics.n_topics, topics.vocab_size
    eta_lt, base, a, cross = _supervision_arrays(model)
    phi_t = np.ascontiguousarray(topics.phi.T)
    bounds = np.linspace(0, D, num=min(workers, D) + 1, dtype=np.int64) if D else np.zeros(1, np.int64)
    n_blocks = max(len(bounds) - 1, 0)
    deltas = [np.zeros((K, V), dtype=np.int64) for _ in range(n_blocks)]

    def run_block(b: int) -> int:
        args = (
            topics.tokens, topics.offsets, int(bounds[b]), int(bounds[b + 1]),
            topics.z, topics.doc_topic, deltas[b], phi_t, float(model.hyper.alpha),
            eta_lt, base, a,
        )
        if naive:
            return sweep_docs_naive(*args, uniforms)
        return sweep_docs_cached(*args, cross, uniforms)

    if n_blocks <= 1:
        codes = [run_block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=n_blocks) as pool:
            codes = list(pool.map(run_block, range(n_blocks)))
    for code in codes:
        if code >= 0:
            raise SamplerAbort(f"document {code}: token weights degenerated to zero")
    for delta in deltas:
        topics.topic_word += delta
    topics.topic_totals = topics.topic_word.sum(axis=1)


def gibbs_iteration(model: ModelState, config: RunConfig) -> ModelState:
    """One complete sweep in the fixed phase order; advances model.iteration."""
    it = model.iteration
    seed = config.seed
    topics = model.topics

    if model.reg is not None:
        reg = model.reg
        zbar = zbar_matrix(topics)
        design = design_matrix(zbar, model.corpus.covariates)
        sample_latents(
            reg, model.corpus.labels, design, rngmod.stream(seed, rngmod.PHASE_LATENT, it)
        )
        gram = design.T @ design
        rhs_all = design.T @ reg.a
        for l in range(reg.n_classes):
            try:
                reg.eta[:, l] = sample_eta_class(
                    gram, rhs_all[:, l], reg.tau[l], reg.lam[:, l], model.prior,
                    rngmod.stream(seed, rngmod.PHASE_ETA, it, l),
                )
            except np.linalg.LinAlgError as exc:
                raise SamplerAbort(
                    f"iteration {it}: coefficient precision factorization failed "
                    f"for class {l}: {exc}"
                ) from exc
        if model.prior.kind == "horseshoe":
            for l in range(reg.n_classes):
                reg.tau[l] = sample_tau(
                    reg.eta[1:, l], reg.lam[:, l], reg.tau[l],
                    rngmod.stream(seed, rngmod.PHASE_TAU, it, l),
                )
                reg.lam[:, l] = sample_lambda_column(
                    reg.eta[1:, l], reg.tau[l], reg.lam[:, l],
                    rngmod.stream(seed, rngmod.PHASE_LAMBDA, it, l),
                )

    uniforms = rngmod.stream(seed, rngmod.PHASE_TOPICS, it).random(topics.tokens.size)
    z_sweep(model, uniforms, workers=config.workers)
    sample_phi(topics, model.hyper, rngmod.stream(seed, rngmod.PHASE_PHI, it))
    model.iteration += 1
    return model


@dataclass
class LogLik:
    do_term: float
    lda_term: float

    @property
    def total(self) -> float:
        return self.do_term + self.lda_term


def lda_log_likelihood(topic_word: np.ndarray, beta: float) -> float:
    """Collapsed log p(w | z, beta): a product of Dirichlet-multinomial
    normalizers, one per topic row.  Zero-count cells contribute nothing."""
    K, V = topic_word.shape
    totals = topic_word.sum(axis=1).astype(np.float64)
    out = K * gammaln(V * beta) - float(np.sum(gammaln(V * beta + totals)))
    nz = topic_word[topic_word > 0].astype(np.float64)
    out += float(np.sum(gammaln(beta + nz))) - nz.size * gammaln(beta)
    return out


def log_likelihood(model: ModelState) -> LogLik:
    """Trace quantities: classifier orthant-mass term plus the collapsed
    topic-word term."""
    do_term = 0.0
    if model.reg is not None:
        zbar = zbar_matrix(model.topics)
        design = design_matrix(zbar, model.corpus.covariates)
        do_term = do_log_likelihood(design @ model.reg.eta)
    lda_term = lda_log_likelihood(model.topics.topic_word, model.hyper.beta)
    return LogLik(do_term=do_term, lda_term=lda_term)


def state_hash(model: ModelState) -> str:
    """Content hash of the full mutable state; worker-count invariance is
    asserted through this."""
    h = hashlib.sha256()
    h.update(np.int64(model.iteration).tobytes())
    for arr in (
        model.topics.z, model.topics.doc_topic, model.topics.topic_word,
        model.topics.topic_totals, model.topics.phi,
    ):
        h.update(np.ascontiguousarray(arr).tobytes())
    if model.reg is not None:
        for arr in (model.reg.eta, model.reg.a, model.reg.tau, model.reg.lam):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def corpus_fingerprint(corpus: Corpus) -> str:
    """Content hash of the encoded corpus (tokens, labels, covariates)."""
    tokens, offsets = corpus.flatten()
    h = hashlib.sha256()
    for arr in (tokens, offsets, corpus.labels, corpus.covariates):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(("\x00".join(corpus.label_names)).encode("utf-8"))
    h.update(np.int64(corpus.vocab_size).tobytes())
    return h.hexdigest()


@dataclass
class SamplerResult:
    """Training outputs: final state plus the posterior summaries that
    prediction needs."""

    model: ModelState
    phi_bar: np.ndarray
    zbar_mean: np.ndarray
    eta_draws: np.ndarray | None
    eta_mean: np.ndarray | None
    trace: list[tuple[int, float, float, float, float]]
    seconds: float


def run_sampler(
    corpus: Corpus,
    config: RunConfig,
    trace_path: str | None = None,
    checkpoint_dir: str | None = None,
    progress: bool = False,
) -> SamplerResult:
    """Run the full schedule: burn-in, posterior draws, averaging windows."""
    model = init_model(corpus, config)
    t0 = time.perf_counter()
    phi_sum = np.zeros_like(model.topics.phi)
    zbar_sum = np.zeros((corpus.n_docs, config.n_topics))
    window_start = config.iterations - config.phi_mean_window
    n_window = 0
    eta_draws: list[np.ndarray] = []
    trace: list[tuple[int, float, float, float, float]] = []

    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    if trace_fh:
        trace_fh.write("iteration\tdo_log_lik\tlda_log_lik\ttotal_log_lik\tseconds\n")
    try:
        for it in range(config.iterations):
            gibbs_iteration(model, config)
            ll = log_likelihood(model)
            elapsed = time.perf_counter() - t0
            row = (it, ll.do_term, ll.lda_term, ll.total, elapsed)
            trace.append(row)
            if trace_fh:
                trace_fh.write(
                    f"{it}\t{ll.do_term:.6f}\t{ll.lda_term:.6f}\t{ll.total:.6f}\t{elapsed:.3f}\n"
                )
            if it >= window_start:
                phi_sum += model.topics.phi
                zbar_sum += zbar_matrix(model.topics)
                n_window += 1
            if model.reg is not None and it >= config.burn_in:
                if (it - config.burn_in) % config.thinning == 0:
                    eta_draws.append(model.reg.eta.copy())
            if config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
                if checkpoint_dir:
                    save_snapshot(model, f"{checkpoint_dir}/checkpoint_{it + 1:06d}.npz")
            if progress and (it + 1) % 50 == 0:
                print(f"iteration {it + 1}/{config.iterations} total_ll={ll.total:.1f}")
    finally:
        if trace_fh:
            trace_fh.close()

    phi_bar = phi_sum / n_window
    phi_bar /= phi_bar.sum(axis=1, keepdims=True)
    eta_arr = np.stack(eta_draws) if eta_draws else None
    return SamplerResult(
        model=model,
        phi_bar=phi_bar,
        zbar_mean=zbar_sum / n_window,
        eta_draws=eta_arr,
        eta_mean=eta_arr.mean(axis=0) if eta_arr is not None else None,
        trace=trace,
        seconds=time.perf_counter() - t0,
    )


def save_snapshot(model: ModelState, path: str) -> None:
    """Persist the resumable sampler state (counts, assignments, parameters)."""
    meta = {
        "kind": "sampler_snapshot",
        "iteration": model.iteration,
        "n_topics": model.hyper.n_topics,
        "alpha": model.hyper.alpha,
        "beta": model.hyper.beta,
        "prior_kind": model.prior.kind,
        "prior_c": model.prior.c,
        "supervised": model.supervised,
        "corpus_fingerprint": corpus_fingerprint(model.corpus),
    }
    arrays = {
        "z": model.topics.z,
        "doc_topic": model.topics.doc_topic,
        "topic_word": model.topics.topic_word,
        "topic_totals": model.topics.topic_totals,
        "phi": model.topics.phi,
    }
    if model.reg is not None:
        arrays.update(eta=model.reg.eta, a=model.reg.a, tau=model.reg.tau, lam=model.reg.lam)
    save_bundle(path, meta, arrays)


def load_snapshot(path: str, corpus: Corpus) -> ModelState:
    """Rebuild a ModelState from a snapshot against its original corpus."""
    meta, arrays = load_bundle(path)
    if meta.get("kind") != "sampler_snapshot":
        raise ValueError(f"{path}: not a sampler snapshot")
    if meta["corpus_fingerprint"] != corpus_fingerprint(corpus):
        raise ValueError(f"{path}: snapshot was written for a different corpus")
    tokens, offsets = corpus.flatten()
    hyper = Hyper(n_topics=meta["n_topics"], alpha=meta["alpha"], beta=meta["beta"])
    topics = TopicState(
        tokens=tokens,
        offsets=offsets,
        z=arrays["z"].astype(np.int32),
        doc_topic=arrays["doc_topic"].astype(np.int64),
        topic_word=arrays["topic_word"].astype(np.int64),
        topic_totals=arrays["topic_totals"].astype(np.int64),
        phi=arrays["phi"].astype(np.float64),
        n_topics=hyper.n_topics,
        vocab_size=corpus.vocab_size,
    )
    reg = None
    if meta["supervised"]:
        reg = RegressionState(
            eta=arrays["eta"], a=arrays["a"], tau=arrays["tau"], lam=arrays["lam"]
        )
    model = ModelState(
        corpus=corpus,
        topics=topics,
        reg=reg,
        hyper=hyper,
        prior=PriorFamily(kind=meta["prior_kind"], c=meta["prior_c"]),
        iteration=int(meta["iteration"]),
    )
    return model
