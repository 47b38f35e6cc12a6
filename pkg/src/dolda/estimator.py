"""Scikit-learn style estimator wrapping the full pipeline.

``DoldaClassifier`` takes raw texts (or pre-tokenized documents), builds
the vocabulary, runs the Gibbs sampler, and predicts through the fitted
posterior summaries.  It follows the usual estimator contract:
constructor arguments are stored untouched, fitted state lives in
trailing-underscore attributes, and get_params/set_params come from the
scikit-learn base class.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import build_vocabulary, encode, load_stoplist, tokenize
from .predict import FittedModel, predict_corpus
from .regression import PriorFamily
from .sampler import RunConfig, run_sampler


class DoldaClassifier(BaseEstimator, ClassifierMixin):
    """Supervised topic-model classifier.

    Parameters mirror the training configuration: topic count, Dirichlet
    hyperparameters, coefficient prior family, and the MCMC schedule.
    ``stop_words`` may be "default" (bundled English list), None (keep
    everything), or any iterable of words.  ``min_class_docs`` drops
    classes with too few training documents; lower it for toy corpora.
    """

    def __init__(
        self,
        n_topics: int = 20,
        alpha: float = 0.1,
        beta: float = 0.01,
        prior: str = "horseshoe",
        c: float = 100.0,
        iterations: int = 500,
        burn_in: int = 250,
        phi_mean_window: int = 100,
        thinning: int = 5,
        rare_mass: float = 0.01,
        min_class_docs: int = 10,
        stop_words="default",
        workers: int = 1,
        predict_passes: int = 200,
        predict_burn: int = 100,
        random_state: int = 0,
    ):
        self.n_topics = n_topics
        self.alpha = alpha
        self.beta = beta
        self.prior = prior
        self.c = c
        self.iterations = iterations
        self.burn_in = burn_in
        self.phi_mean_window = phi_mean_window
        self.thinning = thinning
        self.rare_mass = rare_mass
        self.min_class_docs = min_class_docs
        self.stop_words = stop_words
        self.workers = workers
        self.predict_passes = predict_passes
        self.predict_burn = predict_burn
        self.random_state = random_state

    def _stoplist(self):
        if self.stop_words == "default":
            return load_stoplist()
        if self.stop_words is None:
            return None
        return frozenset(str(w).lower() for w in self.stop_words)

    def _tokenize_all(self, X) -> list[list[str]]:
        stop = self._stoplist()
        docs = []
        for item in X:
            if isinstance(item, str):
                docs.append(tokenize(item, stop))
            else:
                toks = [str(t) for t in item]
                docs.append([t for t in toks if t not in stop] if stop else toks)
        return docs

    def _run_config(self) -> RunConfig:
        return RunConfig(
            n_topics=self.n_topics,
            iterations=self.iterations,
            burn_in=self.burn_in,
            phi_mean_window=self.phi_mean_window,
            alpha=self.alpha,
            beta=self.beta,
            prior=PriorFamily(kind=self.prior, c=self.c),
            thinning=self.thinning,
            seed=self.random_state,
            workers=self.workers,
            predict_passes=self.predict_passes,
            predict_burn=self.predict_burn,
        )

    def fit(self, X, y, covariates=None):
        """Fit on documents X (strings or token sequences) and labels y."""
        y = np.asarray(y)
        if len(X) != y.shape[0]:
            raise ValueError(f"X has {len(X)} documents but y has {y.shape[0]} labels")
        if y.shape[0] == 0:
            raise ValueError("cannot fit on an empty corpus")
        token_docs = self._tokenize_all(X)
        vocab = build_vocabulary(token_docs, stoplist=None, rare_mass=self.rare_mass)
        corpus, encoder, _ = encode(
            token_docs, list(y), covariates, vocab, min_class_docs=self.min_class_docs
        )
        kept = set(corpus.label_names)
        self.classes_ = np.array([v for v in np.unique(y) if str(v) in kept])

        config = self._run_config()
        result = run_sampler(corpus, config)
        self.model_ = FittedModel(
            phi_bar=result.phi_bar,
            eta_mean=result.eta_mean,
            eta_draws=result.eta_draws,
            vocabulary=vocab,
            label_names=corpus.label_names,
            n_topics=self.n_topics,
            alpha=self.alpha,
            beta=self.beta,
            prior=config.prior,
            covariate_meta=encoder.to_meta() if encoder is not None else None,
            predict_passes=self.predict_passes,
            predict_burn=self.predict_burn,
        )
        self.vocabulary_ = vocab
        self.trace_ = result.trace
        self.n_features_in_ = len(vocab)
        return self

    def _encode_predict(self, X, covariates):
        token_docs = self._tokenize_all(X)
        docs = [self.vocabulary_.encode_tokens(toks) for toks in token_docs]
        encoder = self.model_.covariate_encoder()
        if encoder is not None and covariates is None:
            raise ValueError("model was fitted with covariates; supply them to predict")
        Xc = encoder.transform(covariates) if encoder is not None else None
        return docs, Xc

    def predict(self, X, covariates=None):
        check_is_fitted(self, "model_")
        docs, Xc = self._encode_predict(X, covariates)
        labels, _, _ = predict_corpus(self.model_, docs, Xc, seed=self.random_state)
        return self.classes_[labels]

    def predict_proba(self, X, covariates=None):
        check_is_fitted(self, "model_")
        docs, Xc = self._encode_predict(X, covariates)
        _, probs, _ = predict_corpus(self.model_, docs, Xc, seed=self.random_state)
        return probs

    def transform(self, X):
        """Topic proportions for documents under the fitted topics."""
        check_is_fitted(self, "model_")
        token_docs = self._tokenize_all(X)
        docs = [self.vocabulary_.encode_tokens(toks) for toks in token_docs]
        _, _, zbars = predict_corpus(
            self.model_, docs, np.zeros((len(docs), self.model_.n_covariates)),
            seed=self.random_state,
        )
        return zbars

    def top_words(self, n: int = 10) -> list[list[str]]:
        """The n highest-probability words of each fitted topic."""
        check_is_fitted(self, "model_")
        order = np.argsort(-self.model_.phi_bar, axis=1)[:, :n]
        return [[self.vocabulary_.types[v] for v in row] for row in order]
