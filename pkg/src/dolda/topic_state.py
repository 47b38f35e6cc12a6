"""Topic assignment state and count bookkeeping.

All counts live in plain integer arrays laid out for the token kernels:
token-major assignments plus per-document and per-topic count matrices
that the sweeps update incrementally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .distributions import sample_dirichlet


@dataclass
class Hyper:
    """Topic-side hyperparameters."""

    n_topics: int
    alpha: float = 0.1
    beta: float = 0.01

    def __post_init__(self) -> None:
        if self.n_topics < 1:
            raise ValueError("n_topics must be at least 1")
        if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
            raise ValueError("alpha must be positive and finite")
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")


@dataclass
class TopicState:
    """Token assignments with their derived counts and the topic-word rows.

    z is token-major and aligned with (tokens, offsets); doc_topic and
    topic_word are redundant with z and kept consistent by the update ops.
    """

    tokens: np.ndarray
    offsets: np.ndarray
    z: np.ndarray
    doc_topic: np.ndarray
    topic_word: np.ndarray
    topic_totals: np.ndarray
    phi: np.ndarray
    n_topics: int
    vocab_size: int
    doc_lengths: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.doc_lengths = np.diff(self.offsets)

    @property
    def n_docs(self) -> int:
        return self.offsets.size - 1

    def doc_slice(self, d: int) -> slice:
        return slice(self.offsets[d], self.offsets[d + 1])


def init_random(corpus: Corpus, hyper: Hyper, rng: np.random.Generator) -> TopicState:
    """Uniform random assignments, counts built to match, phi drawn from
    its conditional given those counts."""
    tokens, offsets = corpus.flatten()
    K, V = hyper.n_topics, corpus.vocab_size
    z = rng.integers(0, K, size=tokens.size).astype(np.int32)
    state = TopicState(
        tokens=tokens,
        offsets=offsets,
        z=z,
        doc_topic=np.zeros((corpus.n_docs, K), dtype=np.int64),
        topic_word=np.zeros((K, V), dtype=np.int64),
        topic_totals=np.zeros(K, dtype=np.int64),
        phi=np.zeros((K, V), dtype=np.float64),
        n_topics=K,
        vocab_size=V,
    )
    dt, tw, tt = rebuild_counts(state)
    state.doc_topic, state.topic_word, state.topic_totals = dt, tw, tt
    sample_phi(state, hyper, rng)
    return state


def rebuild_counts(state: TopicState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recompute all count matrices from scratch; the consistency oracle."""
    K, V = state.n_topics, state.vocab_size
    doc_topic = np.zeros((state.n_docs, K), dtype=np.int64)
    topic_word = np.zeros((K, V), dtype=np.int64)
    for d in range(state.n_docs):
        sl = state.doc_slice(d)
        np.add.at(doc_topic[d], state.z[sl], 1)
    np.add.at(topic_word, (state.z, state.tokens), 1)
    return doc_topic, topic_word, topic_word.sum(axis=1)


def counts_consistent(state: TopicState) -> bool:
    dt, tw, tt = rebuild_counts(state)
    return (
        np.array_equal(dt, state.doc_topic)
        and np.array_equal(tw, state.topic_word)
        and np.array_equal(tt, state.topic_totals)
    )


def decrement(state: TopicState, d: int, n: int) -> int:
    """Remove token n of document d from the counts; returns its topic."""
    idx = state.offsets[d] + n
    k = int(state.z[idx])
    v = int(state.tokens[idx])
    state.doc_topic[d, k] -= 1
    state.topic_word[k, v] -= 1
    state.topic_totals[k] -= 1
    if state.doc_topic[d, k] < 0 or state.topic_word[k, v] < 0:
        raise RuntimeError(f"count went negative at doc {d}, token {n}")
    return k


def increment(state: TopicState, d: int, n: int, k: int) -> None:
    """Assign token n of document d to topic k and restore the counts."""
    idx = state.offsets[d] + n
    v = int(state.tokens[idx])
    state.z[idx] = k
    state.doc_topic[d, k] += 1
    state.topic_word[k, v] += 1
    state.topic_totals[k] += 1


def zbar(state: TopicState, d: int) -> np.ndarray:
    """Topic proportions of document d; all zeros for an empty document."""
    n = state.doc_lengths[d]
    if n == 0:
        return np.zeros(state.n_topics, dtype=np.float64)
    return state.doc_topic[d].astype(np.float64) / n


def zbar_matrix(state: TopicState) -> np.ndarray:
    """Stacked topic proportions, one row per document (zeros when empty)."""
    lengths = np.maximum(state.doc_lengths, 1).astype(np.float64)
    return state.doc_topic.astype(np.float64) / lengths[:, None]


def sample_phi(state: TopicState, hyper: Hyper, rng: np.random.Generator) -> np.ndarray:
    """Redraw every topic-word row from its Dirichlet conditional."""
    conc = hyper.beta + state.topic_word.astype(np.float64)
    g = rng.standard_gamma(conc)
    totals = g.sum(axis=1)
    bad = ~(totals > 0.0)
    for k in np.flatnonzero(bad):
        g[k] = rng.standard_gamma(conc[k])
        if g[k].sum() <= 0.0:
            # underflow stalemate: fall back to the exact row sampler
            g[k] = sample_dirichlet(conc[k], rng)
        totals[k] = g[k].sum()
    state.phi = g / totals[:, None]
    return state.phi
