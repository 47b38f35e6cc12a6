"""Scoring new documents against a fitted model.

A fitted model is the averaged topic-word matrix, the retained coefficient
draws, and the preprocessing state (vocabulary, label names, covariate
encoding).  Prediction samples each new document's topic indicators
against the fixed averaged topics, then pushes the resulting proportion
vector through the coefficient posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from ._kernels import sample_doc_topics
from .corpus import CovariateEncoder, Vocabulary
from .regression import PriorFamily, design_row, do_class_probabilities
from .serialize import load_bundle, save_bundle


@dataclass
class FittedModel:
    """Everything prediction needs, immutable after construction."""

    phi_bar: np.ndarray
    eta_mean: np.ndarray
    eta_draws: np.ndarray
    vocabulary: Vocabulary
    label_names: list[str]
    n_topics: int
    alpha: float
    beta: float
    prior: PriorFamily
    covariate_meta: dict | None = None
    predict_passes: int = 200
    predict_burn: int = 100
    extra_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.eta_draws.ndim != 3 or self.eta_draws.shape[0] < 1:
            raise ValueError("eta_draws must hold at least one draw")
        rows = self.phi_bar.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-9):
            raise ValueError("phi_bar rows must sum to 1")

    def covariate_encoder(self) -> CovariateEncoder | None:
        if self.covariate_meta is None:
            return None
        return CovariateEncoder.from_meta(self.covariate_meta)

    @property
    def n_covariates(self) -> int:
        return self.eta_mean.shape[0] - 1 - self.n_topics


def estimate_phi_bar(phi_draws) -> np.ndarray:
    """Mean of the retained topic-word draws, rows renormalized so rounding
    drift cannot accumulate."""
    draws = list(phi_draws)
    if not draws:
        raise ValueError("phi averaging window is empty")
    mean = np.mean(np.stack(draws), axis=0)
    return mean / mean.sum(axis=1, keepdims=True)


def sample_new_doc_topics(
    token_ids: np.ndarray,
    phi_bar: np.ndarray,
    alpha: float,
    passes: int = 200,
    rng: np.random.Generator | None = None,
    burn: int = 100,
) -> np.ndarray:
    """Topic proportions for one held-out document under fixed topics.

    Collapsed sweeps against the document's own excluded-token counts;
    returns the mean proportion vector over the retained passes.  An empty
    document gets the zero vector (intercept and covariates then carry the
    prediction)."""
    token_ids = np.asarray(token_ids, dtype=np.int32)
    K = phi_bar.shape[0]
    if token_ids.size == 0:
        return np.zeros(K)
    if not 0 < burn < passes:
        raise ValueError("burn must lie in (0, passes)")
    if rng is None:
        rng = rngmod.stream(0, rngmod.PHASE_PREDICT)
    phi_t = np.ascontiguousarray(phi_bar.T)
    uniforms = rng.random(passes * token_ids.size)
    return sample_doc_topics(token_ids, phi_t, float(alpha), passes, burn, uniforms)


def predict_label(zbar_new: np.ndarray, x_new: np.ndarray, eta_mean: np.ndarray) -> int:
    """MAP label: argmax of the posterior-mean linear scores (ties go to the
    lowest label id, which is what argmax does)."""
    h = design_row(zbar_new, x_new) @ eta_mean
    return int(np.argmax(h))


def predictive_distribution(
    zbar_new: np.ndarray, x_new: np.ndarray, eta_draws: np.ndarray
) -> np.ndarray:
    """Full predictive class distribution: the class-probability map applied
    to each retained coefficient draw, averaged."""
    if eta_draws.ndim != 3 or eta_draws.shape[0] < 1:
        raise ValueError("eta_draws must hold at least one draw")
    row = design_row(zbar_new, x_new)
    scores = np.einsum("r,srl->sl", row, eta_draws)
    return do_class_probabilities(scores).mean(axis=0)


def predict_corpus(
    model: FittedModel,
    docs: list[np.ndarray],
    covariates: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels, predictive distributions, and topic proportions for encoded
    documents.  Each document gets its own stream, so results do not depend
    on scoring order."""
    D = len(docs)
    P = model.n_covariates
    if covariates is None:
        covariates = np.zeros((D, P))
    covariates = np.asarray(covariates, dtype=np.float64)
    if covariates.shape != (D, P):
        raise ValueError(f"covariates must have shape ({D}, {P})")
    K = model.n_topics
    L = len(model.label_names)
    zbars = np.zeros((D, K))
    labels = np.zeros(D, dtype=np.int64)
    probs = np.zeros((D, L))
    for d in range(D):
        rng = rngmod.stream(seed, rngmod.PHASE_PREDICT, 0, d)
        zbars[d] = sample_new_doc_topics(
            docs[d], model.phi_bar, model.alpha,
            passes=model.predict_passes, rng=rng, burn=model.predict_burn,
        )
        labels[d] = predict_label(zbars[d], covariates[d], model.eta_mean)
        probs[d] = predictive_distribution(zbars[d], covariates[d], model.eta_draws)
    return labels, probs, zbars


def save_model(model: FittedModel, path: str) -> None:
    """Serialize to the deterministic bundle format."""
    meta = {
        "kind": "fitted_model",
        "label_names": model.label_names,
        "vocabulary": model.vocabulary.types,
        "n_topics": model.n_topics,
        "alpha": model.alpha,
        "beta": model.beta,
        "prior_kind": model.prior.kind,
        "prior_c": model.prior.c,
        "covariate_meta": model.covariate_meta,
        "predict_passes": model.predict_passes,
        "predict_burn": model.predict_burn,
        "extra": model.extra_meta,
    }
    arrays = {
        "phi_bar": model.phi_bar,
        "eta_mean": model.eta_mean,
        "eta_draws": model.eta_draws,
    }
    save_bundle(path, meta, arrays)


def load_model(path: str) -> FittedModel:
    meta, arrays = load_bundle(path)
    if meta.get("kind") != "fitted_model":
        raise ValueError(f"{path}: not a fitted model bundle")
    return FittedModel(
        phi_bar=arrays["phi_bar"],
        eta_mean=arrays["eta_mean"],
        eta_draws=arrays["eta_draws"],
        vocabulary=Vocabulary.from_types(meta["vocabulary"]),
        label_names=list(meta["label_names"]),
        n_topics=int(meta["n_topics"]),
        alpha=float(meta["alpha"]),
        beta=float(meta["beta"]),
        prior=PriorFamily(kind=meta["prior_kind"], c=meta["prior_c"]),
        covariate_meta=meta.get("covariate_meta"),
        predict_passes=int(meta.get("predict_passes", 200)),
        predict_burn=int(meta.get("predict_burn", 100)),
        extra_meta=meta.get("extra", {}),
    )
