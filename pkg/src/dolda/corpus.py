"""Text ingestion: tokenization, vocabulary pruning, label/covariate
encoding, and stratified fold assignment.

The encoded :class:`Corpus` is the only shape the sampler understands:
integer token ids per document, integer class labels, and a dense float
covariate matrix.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .rng import PHASE_FOLDS, stream

# Letters only: digits, punctuation and underscores separate tokens.
_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


def load_stoplist(path: str | None = None) -> frozenset[str]:
    """Stopword set, one word per line; the bundled list is used when no
    path is given.  Blank lines and '#' comments are skipped."""
    if path is None:
        text = resources.files("dolda").joinpath("stopwords.txt").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    words = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line.lower())
    return frozenset(words)


def tokenize(text: str, stoplist: frozenset[str] | None = None) -> list[str]:
    """Lowercase, keep alphabetic runs, drop stoplisted words."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stoplist:
        tokens = [t for t in tokens if t not in stoplist]
    return tokens


@dataclass
class Vocabulary:
    """Word type inventory with a stable id order."""

    types: list[str]
    index: dict[str, int] = field(repr=False)

    @classmethod
    def from_types(cls, types: Sequence[str]) -> "Vocabulary":
        types = list(types)
        index = {w: i for i, w in enumerate(types)}
        if len(index) != len(types):
            raise ValueError("duplicate word types")
        return cls(types=types, index=index)

    def __len__(self) -> int:
        return len(self.types)

    def encode_tokens(self, tokens: Iterable[str]) -> np.ndarray:
        """Token ids for known words; out-of-vocabulary words are dropped."""
        idx = self.index
        return np.array([idx[t] for t in tokens if t in idx], dtype=np.int32)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.types[i] for i in ids]


def build_vocabulary(
    token_docs: Sequence[Sequence[str]],
    stoplist: frozenset[str] | None = None,
    rare_mass: float = 0.01,
) -> Vocabulary:
    """Build the vocabulary, pruning the rarest types.

    Types are dropped least-frequent first (lexicographic tie-break) while
    the running total of dropped token occurrences stays within
    ``rare_mass`` of the corpus token count.  Ids are assigned by
    descending frequency, lexicographic on ties.
    """
    if not 0.0 <= rare_mass < 1.0:
        raise ValueError("rare_mass must lie in [0, 1)")
    counts: dict[str, int] = {}
    total = 0
    for doc in token_docs:
        for tok in doc:
            if stoplist and tok in stoplist:
                continue
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    if total == 0:
        raise ValueError("no tokens survive the stoplist; vocabulary would be empty")

    budget = rare_mass * total
    dropped_mass = 0
    pruned: set[str] = set()
    for word, c in sorted(counts.items(), key=lambda kv: (kv[1], kv[0])):
        if dropped_mass + c > budget:
            break
        dropped_mass += c
        pruned.add(word)
    kept = [w for w in counts if w not in pruned]
    if not kept:
        raise ValueError("rare_mass pruning removed every word type")
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary.from_types(kept)


class CovariateEncoder:
    """Fixed design columns for non-text covariates.

    Numeric columns pass through as float; everything else is one-hot
    encoded over the categories seen during :meth:`fit`.  Unseen categories
    at transform time map to the all-zeros row for that block.
    """

    def __init__(self) -> None:
        self.columns: list[str] = []
        self.kinds: list[str] = []
        self.categories: dict[str, list[str]] = {}
        self.feature_names: list[str] = []
        self._fitted = False

    @staticmethod
    def _as_frame(table) -> pd.DataFrame:
        if table is None:
            return pd.DataFrame(index=[])
        if isinstance(table, pd.DataFrame):
            return table
        arr = np.asarray(table)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError("covariates must be 2-d")
        return pd.DataFrame(arr, columns=[f"x{j}" for j in range(arr.shape[1])])

    def fit(self, table) -> "CovariateEncoder":
        frame = self._as_frame(table)
        self.columns = [str(c) for c in frame.columns]
        self.kinds = []
        self.categories = {}
        self.feature_names = []
        for col in frame.columns:
            series = frame[col]
            if pd.api.types.is_numeric_dtype(series):
                self.kinds.append("numeric")
                self.feature_names.append(str(col))
            else:
                cats = sorted({str(v) for v in series.dropna()})
                if not cats:
                    raise ValueError(f"covariate column {col!r} has no usable values")
                self.kinds.append("categorical")
                self.categories[str(col)] = cats
                self.feature_names.extend(f"{col}={c}" for c in cats)
        self._fitted = True
        return self

    def transform(self, table) -> np.ndarray:
        if not self._fitted:
            raise RuntimeError("CovariateEncoder.transform called before fit")
        frame = self._as_frame(table)
        missing = [c for c in self.columns if c not in map(str, frame.columns)]
        if missing:
            raise ValueError(f"covariate columns missing at transform: {missing}")
        n = len(frame)
        blocks: list[np.ndarray] = []
        for col, kind in zip(self.columns, self.kinds):
            series = frame[col]
            if kind == "numeric":
                vals = pd.to_numeric(series, errors="raise").to_numpy(dtype=np.float64)
                if not np.all(np.isfinite(vals)):
                    raise ValueError(f"covariate column {col!r} has non-finite values")
                blocks.append(vals[:, None])
            else:
                cats = self.categories[col]
                block = np.zeros((n, len(cats)), dtype=np.float64)
                lookup = {c: j for j, c in enumerate(cats)}
                for i, v in enumerate(series):
                    j = lookup.get(str(v))
                    if j is not None:
                        block[i, j] = 1.0
                blocks.append(block)
        if not blocks:
            return np.zeros((n, 0), dtype=np.float64)
        return np.hstack(blocks)

    def fit_transform(self, table) -> np.ndarray:
        return self.fit(table).transform(table)

    def to_meta(self) -> dict:
        return {
            "columns": self.columns,
            "kinds": self.kinds,
            "categories": self.categories,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "CovariateEncoder":
        enc = cls()
        enc.columns = list(meta["columns"])
        enc.kinds = list(meta["kinds"])
        enc.categories = {k: list(v) for k, v in meta["categories"].items()}
        enc.feature_names = list(meta["feature_names"])
        enc._fitted = True
        return enc


@dataclass
class Corpus:
    """Encoded collection: token ids, labels, covariates.

    labels hold class ids in [0, n_classes); a label of -1 marks an
    unlabeled document (allowed only where a caller says so, e.g. held-out
    prediction).  Empty documents are legal and keep a zero topic average.
    """

    docs: list[np.ndarray]
    labels: np.ndarray
    covariates: np.ndarray
    label_names: list[str]
    vocab_size: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.covariates = np.asarray(self.covariates, dtype=np.float64)
        if self.covariates.ndim != 2:
            raise ValueError("covariates must be 2-d (n_docs x n_covariates)")
        d = len(self.docs)
        if self.labels.shape != (d,) or self.covariates.shape[0] != d:
            raise ValueError("docs, labels and covariates disagree on n_docs")
        if not np.all(np.isfinite(self.covariates)):
            raise ValueError("covariates must be finite")
        L = len(self.label_names)
        if self.labels.size and (self.labels.max(initial=-1) >= L or self.labels.min(initial=0) < -1):
            raise ValueError("labels out of range")
        for i, doc in enumerate(self.docs):
            doc = np.asarray(doc, dtype=np.int32)
            self.docs[i] = doc
            if doc.size and (doc.min() < 0 or doc.max() >= self.vocab_size):
                raise ValueError(f"document {i} has token ids outside the vocabulary")

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def doc_lengths(self) -> np.ndarray:
        return np.array([d.size for d in self.docs], dtype=np.int64)

    def flatten(self) -> tuple[np.ndarray, np.ndarray]:
        """Token-major view: (tokens, offsets) with offsets of length D+1."""
        lengths = self.doc_lengths()
        offsets = np.zeros(self.n_docs + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        if self.n_docs == 0:
            return np.zeros(0, dtype=np.int32), offsets
        tokens = np.concatenate([d for d in self.docs] or [np.zeros(0, np.int32)])
        return tokens.astype(np.int32, copy=False), offsets

    def subset(self, indices: np.ndarray) -> "Corpus":
        """Row subset that keeps the label space intact."""
        indices = np.asarray(indices, dtype=np.int64)
        return Corpus(
            docs=[self.docs[i] for i in indices],
            labels=self.labels[indices],
            covariates=self.covariates[indices],
            label_names=list(self.label_names),
            vocab_size=self.vocab_size,
        )


def encode(
    token_docs: Sequence[Sequence[str]],
    labels: Sequence | None,
    covariates,
    vocab: Vocabulary,
    min_class_docs: int = 10,
    covariate_encoder: CovariateEncoder | None = None,
) -> tuple[Corpus, CovariateEncoder | None, np.ndarray]:
    """Encode tokenized documents against a fixed vocabulary.

    Classes rarer than ``min_class_docs`` are dropped together with their
    documents (a warning says which).  Out-of-vocabulary tokens are
    silently dropped; documents that end up empty are kept.  Returns the
    corpus, the fitted covariate encoder (None when no covariates), and
    the surviving row indices into the original document list.
    """
    d = len(token_docs)
    docs = [vocab.encode_tokens(toks) for toks in token_docs]

    if labels is None:
        label_ids = np.full(d, -1, dtype=np.int64)
        label_names: list[str] = []
        keep = np.arange(d)
    else:
        labels = list(labels)
        if len(labels) != d:
            raise ValueError("labels length does not match documents")
        try:
            ordered = sorted(set(labels))
        except TypeError:
            ordered = sorted(set(labels), key=str)
        tally = {v: 0 for v in ordered}
        for v in labels:
            tally[v] += 1
        kept_values = [v for v in ordered if tally[v] >= min_class_docs]
        dropped = [v for v in ordered if tally[v] < min_class_docs]
        if not kept_values:
            raise ValueError(
                f"no class has at least min_class_docs={min_class_docs} documents"
            )
        if dropped:
            warnings.warn(
                "dropping classes below min_class_docs="
                f"{min_class_docs}: {[str(v) for v in dropped]}",
                UserWarning,
                stacklevel=2,
            )
        to_id = {v: i for i, v in enumerate(kept_values)}
        keep = np.array([i for i, v in enumerate(labels) if v in to_id], dtype=np.int64)
        label_ids = np.array([to_id[labels[i]] for i in keep], dtype=np.int64)
        label_names = [str(v) for v in kept_values]
        docs = [docs[i] for i in keep]

    if covariates is None:
        X = np.zeros((len(docs), 0), dtype=np.float64)
        encoder = covariate_encoder
    else:
        if covariate_encoder is None:
            encoder = CovariateEncoder().fit(
                CovariateEncoder._as_frame(covariates)
            )
        else:
            encoder = covariate_encoder
        X = encoder.transform(CovariateEncoder._as_frame(covariates))
        if X.shape[0] != d:
            raise ValueError("covariate rows do not match documents")
        X = X[keep]

    corpus = Corpus(
        docs=docs,
        labels=label_ids,
        covariates=X,
        label_names=label_names,
        vocab_size=len(vocab),
    )
    return corpus, encoder, keep


@dataclass
class FoldAssignment:
    """Stratified cross-validation fold labels, one per document."""

    fold_of_doc: np.ndarray
    n_folds: int

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_doc != fold)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_doc == fold)


def split_folds(corpus: Corpus, n_folds: int, seed: int) -> FoldAssignment:
    """Deterministic stratified folds.

    Documents are shuffled within each class (one stream per class),
    classes are concatenated, and positions are dealt round-robin, so
    per-class fold counts differ by at most one and so do totals.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    smallest = np.bincount(corpus.labels[corpus.labels >= 0], minlength=corpus.n_classes)
    if corpus.n_classes and smallest.min() < n_folds:
        raise ValueError(
            f"smallest class has {smallest.min()} documents; cannot fill {n_folds} folds"
        )
    fold_of_doc = np.full(corpus.n_docs, -1, dtype=np.int64)
    position = 0
    for c in range(corpus.n_classes):
        members = np.flatnonzero(corpus.labels == c)
        rng = stream(seed, PHASE_FOLDS, 0, c)
        rng.shuffle(members)
        for idx in members:
            fold_of_doc[idx] = position % n_folds
            position += 1
    unlabeled = np.flatnonzero(corpus.labels < 0)
    for idx in unlabeled:
        fold_of_doc[idx] = position % n_folds
        position += 1
    return FoldAssignment(fold_of_doc=fold_of_doc, n_folds=n_folds)


def read_corpus_table(
    path: str,
    text_column: str,
    label_column: str | None = None,
    covariate_columns: Sequence[str] = (),
    doc_id_column: str | None = None,
    delimiter: str = ",",
) -> tuple[list[str], list[str], list | None, pd.DataFrame | None]:
    """Load (ids, texts, labels, covariates) from a delimited table."""
    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    for col in [text_column, label_column, doc_id_column, *covariate_columns]:
        if col is not None and col not in frame.columns:
            raise ValueError(f"{path}: column {col!r} not found (have {list(frame.columns)})")
    texts = frame[text_column].tolist()
    if doc_id_column is not None:
        ids = frame[doc_id_column].tolist()
    else:
        ids = [str(i) for i in range(len(frame))]
    labels = frame[label_column].tolist() if label_column else None
    covars = _covariate_frame(frame, covariate_columns)
    return ids, texts, labels, covars


def _covariate_frame(frame: pd.DataFrame, covariate_columns: Sequence[str]):
    """Covariate slice with numeric columns restored.

    Tables are read with every cell as text (labels and ids must never be
    coerced); a covariate column where each entry parses as a number is a
    measurement, not a category, so it is converted back before encoding.
    """
    if not covariate_columns:
        return None
    covars = frame[list(covariate_columns)].copy()
    for col in covars.columns:
        converted = pd.to_numeric(covars[col], errors="coerce")
        if not converted.isna().any():
            covars[col] = converted
    return covars


def read_corpus_dir(
    corpus_dir: str,
    metadata_path: str,
    doc_id_column: str,
    label_column: str | None = None,
    covariate_columns: Sequence[str] = (),
    delimiter: str = ",",
) -> tuple[list[str], list[str], list | None, pd.DataFrame | None]:
    """Load one text file per metadata row; the id column names the file."""
    import os

    frame = pd.read_csv(metadata_path, sep=delimiter, dtype=str, keep_default_na=False)
    for col in [doc_id_column, label_column, *covariate_columns]:
        if col is not None and col not in frame.columns:
            raise ValueError(
                f"{metadata_path}: column {col!r} not found (have {list(frame.columns)})"
            )
    ids = frame[doc_id_column].tolist()
    texts = []
    for doc_id in ids:
        candidates = [os.path.join(corpus_dir, doc_id), os.path.join(corpus_dir, doc_id + ".txt")]
        for cand in candidates:
            if os.path.isfile(cand):
                with open(cand, "r", encoding="utf-8", errors="replace") as fh:
                    texts.append(fh.read())
                break
        else:
            raise FileNotFoundError(f"document file not found for id {doc_id!r} in {corpus_dir}")
    labels = frame[label_column].tolist() if label_column else None
    covars = _covariate_frame(frame, covariate_columns)
    return ids, texts, labels, covars
