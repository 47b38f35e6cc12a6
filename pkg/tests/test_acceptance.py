"""Release acceptance gate: nine numbered end-to-end checks.

Each test covers one release criterion and prints its measured numbers, so
a verbose run shows one pass/fail line per criterion and a failing run shows
the measurement next to the pinned bar.  The bars below are release
constants; loosening one is a release decision, not a test fix.
"""

import copy
import os
import time

import numpy as np
import pytest
from helpers import grid_cdf_xi, ks_against_grid
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr

from dolda import rng as rngmod
from dolda.corpus import Vocabulary, build_vocabulary, encode, load_stoplist, tokenize
from dolda.distributions import truncated_normal_one_sided
from dolda.geweke import run_geweke
from dolda.predict import FittedModel, predict_corpus
from dolda.regression import (
    PriorFamily,
    fit_do_probit,
    prior_precision_diagonal,
    sample_eta_class,
    sample_lambda,
    sample_tau,
)
from dolda.rng import RngStream
from dolda.sampler import (
    RunConfig,
    compute_eta_cross,
    compute_g_all,
    gibbs_iteration,
    init_model,
    run_sampler,
    state_hash,
    update_g_incremental,
    z_sweep,
)
from dolda.simulate import forward_simulate

Z_MAX = 4.0                # joint-consistency bound per monitored statistic
GEWEKE_MIN_STATS = 8       # statistics the harness must monitor
GEWEKE_TIME_S = 600.0
CACHE_TOL = 1e-8           # incremental vs from-scratch cache drift
MC_SIGMA = 3.0             # Monte Carlo tolerance, in standard errors
KS_ALPHA = 1e-3            # slice-kernel stationary-law KS level
HALF_NORMAL_MEAN = 0.7978845608028654   # E[X | X>0], X ~ N(0,1) = sqrt(2/pi)
TAIL_MEAN_TARGET = 0.1221  # quoted E[X | X>0] for X ~ N(-8,1); exact value
                           # is 0.12136811223617094 and both sit inside the
                           # same 3-standard-error window at 10^5 draws
ACC_MIN = 0.90             # synthetic held-out accuracy floor
TV_MAX = 0.10              # mean total variation to matched true topics
RECOVER_TIME_S = 900.0
SHRINK_RATIO = 0.1         # horseshoe null medians vs normal-prior baseline
NEWS_ACC_MIN = 0.70
NEWS_TIME_S = 1800.0
SPEEDUP_MIN = 5.0          # cached sweep vs naive recompute at 100 topics


def _gen(seed, stream=0):
    return RngStream(seed, stream).generator()


# Shared synthetic-corpus fixture for the recovery and two-step checks:
# disjoint 50-word topic blocks and a strong two-topic signal pair per class
# keep the oracle (true-parameter) accuracy near 0.98, so the 0.90 floor
# measures recovery rather than the luck of a prior draw.
SIM_TOPICS, SIM_CLASSES, SIM_VOCAB = 10, 5, 500
SIM_TRAIN, SIM_TEST, SIM_LEN = 500, 200, 100


def _planted_parameters():
    phi = np.zeros((SIM_TOPICS, SIM_VOCAB))
    width = SIM_VOCAB // SIM_TOPICS
    for k in range(SIM_TOPICS):
        phi[k, width * k : width * (k + 1)] = 1.0 / width
    eta = np.zeros((1 + SIM_TOPICS, SIM_CLASSES))
    eta[0, :] = -5.0
    for l in range(SIM_CLASSES):
        eta[1 + 2 * l, l] = 10.0
        eta[2 + 2 * l, l] = 10.0
    return phi, eta


def _planted_corpus(seed):
    phi, eta = _planted_parameters()
    return forward_simulate(
        SIM_TRAIN + SIM_TEST, SIM_LEN, SIM_VOCAB, SIM_TOPICS, SIM_CLASSES,
        alpha=0.02, beta=0.01, phi=phi, eta=eta, seed=seed,
    )


def _sim_vocabulary():
    return Vocabulary.from_types([f"w{v:03d}" for v in range(SIM_VOCAB)])


def _fit_joint(train, seed):
    cfg = RunConfig(
        n_topics=SIM_TOPICS, iterations=600, burn_in=300, phi_mean_window=300,
        alpha=0.02, beta=0.01, prior=PriorFamily("horseshoe", c=100.0),
        thinning=5, seed=seed, workers=1,
    )
    res = run_sampler(train, cfg)
    model = FittedModel(
        phi_bar=res.phi_bar, eta_mean=res.eta_mean, eta_draws=res.eta_draws,
        vocabulary=_sim_vocabulary(), label_names=train.label_names,
        n_topics=SIM_TOPICS, alpha=0.02, beta=0.01, prior=cfg.prior,
        predict_passes=200, predict_burn=100,
    )
    return model, res


def _held_out_accuracy(model, docs, labels, seed):
    preds, _, _ = predict_corpus(model, docs, seed=seed)
    return float(np.mean(preds == labels))


def test_01_joint_distribution_consistency():
    # Two independent estimates of the same prior-predictive moments: iid
    # ancestral draws vs the transition kernel run as a long chain with data
    # regeneration.  Any conditional that does not target its stated
    # posterior shows up as a diverging z-score.
    t0 = time.perf_counter()
    res = run_geweke(n_marginal=60_000, n_successive=200_000, seed=0)
    elapsed = time.perf_counter() - t0
    print(f"\n{res.table()}")
    print(f"max |z| {res.max_abs_z():.3f}  statistics {len(res.stat_names)}  "
          f"{elapsed:.0f}s")
    assert len(res.stat_names) >= GEWEKE_MIN_STATS
    assert res.max_abs_z() < Z_MAX
    assert elapsed < GEWEKE_TIME_S


def test_02_exclusion_cache_matches_direct():
    # Maintain the excluded-token weight cache across 10^3 random token
    # moves on a random model with covariates; the incremental update must
    # track the from-scratch computation at every step.
    rng = _gen(2)
    K, L, P, n_d = 12, 5, 3, 40
    eta = rng.normal(size=(1 + K + P, L))
    x_d = rng.normal(size=P)
    a_row = rng.normal(size=L)
    S = compute_eta_cross(eta, K)
    z = rng.integers(0, K, size=n_d)
    counts = np.bincount(z, minlength=K)
    g = None
    reinserted = None
    worst = 0.0
    for _ in range(1000):
        i = int(rng.integers(0, n_d))
        z_old = int(z[i])
        if g is None:
            excl = (counts - np.eye(K, dtype=int)[z_old]) / n_d
            g = compute_g_all(excl, x_d, a_row, eta, n_d)
        else:
            g = update_g_incremental(g, S, z_old, reinserted, n_d)
        excl = (counts - np.eye(K, dtype=int)[z_old]) / n_d
        ref = compute_g_all(excl, x_d, a_row, eta, n_d)
        worst = max(worst, float(np.max(np.abs(g - ref))))
        z_new = int(rng.integers(0, K))
        counts[z_old] -= 1
        counts[z_new] += 1
        z[i] = z_new
        reinserted = z_new
    print(f"\nmax |incremental - direct| over 1000 moves: {worst:.3e}")
    assert worst <= CACHE_TOL


def test_03_conditional_posterior_oracles():
    # Coefficient column: empirical mean and covariance of 10^5 draws
    # against the direct-inverse Gaussian posterior.
    rng = _gen(31)
    gram = np.array([[6.0, 1.0, 0.5], [1.0, 4.0, 0.2], [0.5, 0.2, 3.0]])
    rhs = np.array([2.0, -1.0, 0.5])
    prior = PriorFamily("horseshoe", c=10.0)
    tau_l, lam = 0.8, np.array([1.5, 0.4])
    Q = gram + np.diag(prior_precision_diagonal(prior, tau_l, lam))
    mean = np.linalg.solve(Q, rhs)
    cov = np.linalg.inv(Q)
    n = 100_000
    draws = np.array(
        [sample_eta_class(gram, rhs, tau_l, lam, prior, rng) for _ in range(n)]
    )
    z_mean = np.abs(draws.mean(axis=0) - mean) / np.sqrt(np.diag(cov) / n)
    var = np.diag(cov)
    # standard error of a Gaussian sample covariance entry
    se_cov = np.sqrt((np.outer(var, var) + cov * cov) / (n - 1))
    z_cov = np.abs(np.cov(draws.T) - cov) / se_cov
    print(f"\ncoefficient moment z: mean {z_mean.max():.2f}  cov {z_cov.max():.2f}")
    assert z_mean.max() < MC_SIGMA
    assert z_cov.max() < MC_SIGMA

    # Global and local scale slice kernels: thinned chain draws of
    # xi = 1/scale^2 against the grid-integrated stationary density.
    eta_col = np.array([0.8, -1.2, 2.0])
    lam3 = np.ones(3)
    shape = 0.5 * (eta_col.size + 1)
    rate = 0.5 * float(np.sum((eta_col / lam3) ** 2))
    rng = _gen(32)
    tau, taus = 1.0, []
    for i in range(500 + 3000 * 20):
        tau = sample_tau(eta_col, lam3, tau, rng)
        if i >= 500 and (i - 500) % 20 == 0:
            taus.append(1.0 / tau**2)
    grid, cdf = grid_cdf_xi(shape, rate)
    res_tau = ks_against_grid(np.array(taus), grid, cdf)

    eta_p, tau_fix = 0.9, 1.4
    rng = _gen(33)
    lam_s, lams = 1.0, []
    for i in range(500 + 3000 * 20):
        lam_s = sample_lambda(eta_p, tau_fix, lam_s, rng)
        if i >= 500 and (i - 500) % 20 == 0:
            lams.append(1.0 / lam_s**2)
    grid, cdf = grid_cdf_xi(1.0, 0.5 * (eta_p / tau_fix) ** 2)
    res_lam = ks_against_grid(np.array(lams), grid, cdf)
    print(f"tau KS p {res_tau.pvalue:.4f}  lambda KS p {res_lam.pvalue:.4f}")
    assert res_tau.pvalue > KS_ALPHA
    assert res_lam.pvalue > KS_ALPHA


def test_04_truncated_normal_means():
    # Half-line draws at 10^5 samples: easy case centered at zero, hard
    # case eight standard deviations into the kept tail.
    n = 100_000
    rng = _gen(41)
    keep = np.ones(n, dtype=bool)
    pos = truncated_normal_one_sided(np.zeros(n), keep, rng)
    se_pos = pos.std(ddof=1) / np.sqrt(n)
    tail = truncated_normal_one_sided(np.full(n, -8.0), keep, rng)
    se_tail = tail.std(ddof=1) / np.sqrt(n)
    print(f"\nhalf-normal mean {pos.mean():.5f} "
          f"(target {HALF_NORMAL_MEAN:.5f}, 3se {3 * se_pos:.5f})")
    print(f"tail mean {tail.mean():.5f} "
          f"(target {TAIL_MEAN_TARGET:.5f}, 3se {3 * se_tail:.5f})")
    assert abs(pos.mean() - HALF_NORMAL_MEAN) < MC_SIGMA * se_pos
    assert abs(tail.mean() - TAIL_MEAN_TARGET) < MC_SIGMA * se_tail


def test_05_simulate_and_recover():
    t0 = time.perf_counter()
    sim = _planted_corpus(42)
    corpus = sim.corpus
    train = corpus.subset(np.arange(SIM_TRAIN))
    model, res = _fit_joint(train, 42)
    test_docs = [corpus.docs[i] for i in range(SIM_TRAIN, SIM_TRAIN + SIM_TEST)]
    acc = _held_out_accuracy(model, test_docs, corpus.labels[SIM_TRAIN:], 42)
    # mean total variation between true and estimated topics under the
    # best-matching permutation
    cost = 0.5 * np.abs(sim.phi[:, None, :] - res.phi_bar[None, :, :]).sum(axis=2)
    r, c = linear_sum_assignment(cost)
    tv = float(cost[r, c].mean())
    elapsed = time.perf_counter() - t0
    print(f"\nheld-out accuracy {acc:.4f}  matched topic TV {tv:.4f}  {elapsed:.0f}s")
    assert acc >= ACC_MIN
    assert tv <= TV_MAX
    assert elapsed < RECOVER_TIME_S


def test_06_horseshoe_shrinks_null_coefficients():
    # 5 signal / 45 null regression on an orthonormalized design.  The same
    # data are fitted under the shrinkage prior and under a flat normal
    # prior; null-coefficient posterior medians must collapse under the
    # former, and the 95% intervals must flag exactly the planted signals.
    rng = np.random.default_rng(1)
    G = rng.standard_normal((150, 50))
    Q, _ = np.linalg.qr(G)
    X = Q * np.sqrt(150.0)
    beta = np.zeros(50)
    beta[:5] = 1.5
    # class 0 carries the signal: P(y=0 | x) = Phi(x.beta)
    y = (rng.random(150) >= ndtr(X @ beta)).astype(np.int64)

    medians = {}
    draws = {}
    for kind in ("horseshoe", "normal"):
        fit = fit_do_probit(
            X, y, 2, PriorFamily(kind, c=100.0),
            iterations=20_000, burn_in=5_000, thinning=10, seed=0,
        )
        # With two classes the second coefficient column mirrors the first,
        # so the first column carries the whole comparison.
        draws[kind] = fit.eta_draws[:, 1:, 0]
        medians[kind] = np.median(draws[kind], axis=0)

    null = np.arange(5, 50)
    baseline = float(np.median(np.abs(medians["normal"][null])))
    hs_null_max = float(np.abs(medians["horseshoe"][null]).max())
    lo = np.quantile(draws["horseshoe"], 0.025, axis=0)
    hi = np.quantile(draws["horseshoe"], 0.975, axis=0)
    flagged = set(np.flatnonzero((lo > 0.0) | (hi < 0.0)).tolist())
    print(f"\nnull medians: horseshoe max {hs_null_max:.4f}  "
          f"normal baseline {baseline:.4f}  ratio {hs_null_max / baseline:.4f}")
    print(f"signal medians {np.round(medians['horseshoe'][:5], 2)}  "
          f"flagged {sorted(flagged)}")
    assert hs_null_max < SHRINK_RATIO * baseline
    assert flagged == {0, 1, 2, 3, 4}


def test_07_joint_fit_beats_two_step():
    # Same corpus, same classifier: supervising the topic sweep must not
    # lose to fitting unsupervised topics first and classifying their
    # frozen proportions afterwards.
    rows = []
    for seed in (0, 1, 2):
        sim = _planted_corpus(seed)
        corpus = sim.corpus
        train = corpus.subset(np.arange(SIM_TRAIN))
        test_docs = [corpus.docs[i] for i in range(SIM_TRAIN, SIM_TRAIN + SIM_TEST)]
        test_labels = corpus.labels[SIM_TRAIN:]

        model, _ = _fit_joint(train, seed)
        joint = _held_out_accuracy(model, test_docs, test_labels, seed)

        cfg = RunConfig(
            n_topics=SIM_TOPICS, iterations=600, burn_in=300, phi_mean_window=300,
            alpha=0.02, beta=0.01, prior=PriorFamily("horseshoe", c=100.0),
            thinning=5, seed=seed, workers=1, supervised=False,
        )
        res_u = run_sampler(train, cfg)
        probit = fit_do_probit(
            res_u.zbar_mean, train.labels, SIM_CLASSES,
            PriorFamily("horseshoe", c=100.0),
            iterations=1000, burn_in=500, thinning=2, seed=seed,
        )
        two_model = FittedModel(
            phi_bar=res_u.phi_bar, eta_mean=probit.eta_mean,
            eta_draws=probit.eta_draws, vocabulary=_sim_vocabulary(),
            label_names=train.label_names, n_topics=SIM_TOPICS,
            alpha=0.02, beta=0.01, prior=cfg.prior,
            predict_passes=200, predict_burn=100,
        )
        two = _held_out_accuracy(two_model, test_docs, test_labels, seed)
        rows.append((seed, joint, two))
    print()
    for seed, joint, two in rows:
        print(f"seed {seed}: joint {joint:.4f}  two-step {two:.4f}")
    for _, joint, two in rows:
        assert joint >= two


_NEWS_CLASSES = ("alt.atheism", "comp.graphics", "sci.space", "talk.religion.misc")


def _load_newsgroups():
    """Fetch the four-group subset from the local scikit-learn cache.

    Never downloads by default, so offline runs skip deterministically;
    set DOLDA_FETCH_NEWSGROUPS=1 to let scikit-learn download, or point
    DOLDA_DATA_HOME at a directory that already holds the cache.
    """
    from sklearn.datasets import fetch_20newsgroups

    allow = os.environ.get("DOLDA_FETCH_NEWSGROUPS", "0") not in ("", "0")
    kw = dict(
        categories=list(_NEWS_CLASSES),
        remove=("headers", "footers", "quotes"),
        download_if_missing=allow,
    )
    home = os.environ.get("DOLDA_DATA_HOME")
    if home:
        kw["data_home"] = home
    train = fetch_20newsgroups(subset="train", **kw)
    test = fetch_20newsgroups(subset="test", **kw)
    return train, test


def test_08_newsgroups_four_class():
    try:
        train_raw, test_raw = _load_newsgroups()
    except Exception as exc:
        pytest.skip(
            f"newsgroups corpus unavailable ({exc.__class__.__name__}); "
            "populate the scikit-learn cache or set DOLDA_FETCH_NEWSGROUPS=1"
        )
    t0 = time.perf_counter()
    stop = load_stoplist()
    train_tokens = [tokenize(text, stop) for text in train_raw.data]
    test_tokens = [tokenize(text, stop) for text in test_raw.data]
    vocab = build_vocabulary(train_tokens, rare_mass=0.02)
    train_labels = [train_raw.target_names[i] for i in train_raw.target]
    corpus, _, _ = encode(train_tokens, train_labels, None, vocab)

    cfg = RunConfig(
        n_topics=20, iterations=1000, burn_in=500, phi_mean_window=500,
        alpha=0.1, beta=0.01, prior=PriorFamily("horseshoe", c=10.0),
        thinning=5, seed=0, workers=2,
    )
    res = run_sampler(corpus, cfg)
    model = FittedModel(
        phi_bar=res.phi_bar, eta_mean=res.eta_mean, eta_draws=res.eta_draws,
        vocabulary=vocab, label_names=corpus.label_names, n_topics=20,
        alpha=0.1, beta=0.01, prior=cfg.prior,
        predict_passes=200, predict_burn=100,
    )
    docs = [vocab.encode_tokens(toks) for toks in test_tokens]
    name_to_id = {name: i for i, name in enumerate(corpus.label_names)}
    truth = np.array([name_to_id[test_raw.target_names[i]] for i in test_raw.target])
    preds, _, _ = predict_corpus(model, docs, seed=0)
    acc = float(np.mean(preds == truth))
    majority = float(np.bincount(truth).max() / truth.size)
    elapsed = time.perf_counter() - t0
    print(f"\nnewsgroups accuracy {acc:.4f} (majority {majority:.4f})  {elapsed:.0f}s")
    assert acc >= NEWS_ACC_MIN
    assert elapsed < NEWS_TIME_S


def test_09_cached_sweep_speed_and_thread_invariance():
    # One-million-token corpus at 100 topics and 20 classes: the cached
    # sweep must beat the naive per-candidate recompute by 5x (best of 3
    # runs each, compilation warmed off the clock), and the blocked
    # parallel sweep must give a bitwise-identical model state for any
    # worker count.
    K, L, V, n_docs, n_len = 100, 20, 2000, 10_000, 100
    prior = PriorFamily("horseshoe", c=10.0)
    sim = forward_simulate(
        n_docs, n_len, V, K, L, alpha=0.5, beta=0.01, seed=3, prior=prior,
    )
    cfg = RunConfig(
        n_topics=K, iterations=4, burn_in=2, phi_mean_window=2,
        alpha=0.5, beta=0.01, prior=prior, seed=3, workers=1,
    )
    model = init_model(sim.corpus, cfg)
    n_tokens = model.topics.tokens.size

    warm = copy.deepcopy(model)
    u = rngmod.stream(cfg.seed, rngmod.PHASE_TOPICS, 0).random(n_tokens)
    z_sweep(warm, u, workers=1, naive=False)
    z_sweep(warm, u, workers=1, naive=True)

    best = {}
    for kind, naive in (("cached", False), ("naive", True)):
        t_best = np.inf
        for _ in range(3):
            trial = copy.deepcopy(model)
            u = rngmod.stream(cfg.seed, rngmod.PHASE_TOPICS, 1).random(n_tokens)
            t0 = time.perf_counter()
            z_sweep(trial, u, workers=1, naive=naive)
            t_best = min(t_best, time.perf_counter() - t0)
        best[kind] = t_best
    speedup = best["naive"] / best["cached"]

    hashes = {}
    for w in (1, 2, 8):
        wcfg = RunConfig(
            n_topics=K, iterations=4, burn_in=2, phi_mean_window=2,
            alpha=0.5, beta=0.01, prior=prior, seed=3, workers=w,
        )
        trial = copy.deepcopy(model)
        for _ in range(3):
            gibbs_iteration(trial, wcfg)
        hashes[w] = state_hash(trial)

    print(f"\ntokens {n_tokens}: cached {best['cached']:.3f}s  "
          f"naive {best['naive']:.3f}s  speedup {speedup:.2f}x")
    print("state hashes:", {w: h[:16] for w, h in hashes.items()})
    assert speedup >= SPEEDUP_MIN
    assert len(set(hashes.values())) == 1
