"""Word vectors via skip-gram with negative sampling, TF-IDF weights, and
the composition of both into per-document signature vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from ._io import atomic_write
from .errors import ConfigError, CorpusError, FormatError
from .text import Vocabulary
from .vectorstore import NORM_RAW, NORM_UNIT, VectorStore

DEFAULT_DIM = 300
DEFAULT_WINDOW = 8
DEFAULT_EPOCHS = 5
DEFAULT_NEGATIVES = 5
DEFAULT_LEARNING_RATE = 0.025
DEFAULT_MIN_LEARNING_RATE = 1e-4

NOISE_POWER = 0.75
IDF_FORMULA = "ln(N/df)"


@dataclass
class DocumentVector:
    """Dense technological signature of one document.

    norm is "unit" for L2-normalized signatures and "raw" for the all-zero
    sentinel assigned to documents with no in-vocabulary content.
    """

    id: str | None
    vector: np.ndarray
    norm: str = "unit"

    @property
    def is_zero(self) -> bool:
        return self.norm == "raw" and not self.vector.any()


def zero_signature(dim: int, doc_id: str | None = None) -> DocumentVector:
    return DocumentVector(doc_id, np.zeros(dim, dtype=np.float32), norm="raw")


def skipgram_pair_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """Negative-sampling loss for one (center, context, negatives) triple."""
    pos = np.dot(context, center)
    neg = np.asarray(negatives) @ center
    return float(np.logaddexp(0.0, -pos) + np.sum(np.logaddexp(0.0, neg)))


def skipgram_pair_gradients(
    center: np.ndarray, context: np.ndarray, negatives: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of skipgram_pair_loss w.r.t. each participating vector."""
    negatives = np.asarray(negatives)
    pos_sig = expit(np.dot(context, center))
    neg_sig = expit(negatives @ center)
    g_context = (pos_sig - 1.0) * center
    g_negatives = neg_sig[:, None] * center[None, :]
    g_center = (pos_sig - 1.0) * context + neg_sig @ negatives
    return g_center, g_context, g_negatives


@dataclass
class WordEmbedding:
    """Learned word-vector table aligned with a vocabulary."""

    vectors: np.ndarray  # (|V|, dim) float32
    vocabulary: Vocabulary
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def save(self, path) -> None:
        store = VectorStore(self.dim)
        for i, term in enumerate(self.vocabulary.terms):
            store.add(term, self.vectors[i], NORM_RAW)
        store.save(path)

    @classmethod
    def load(cls, path, vocabulary: Vocabulary, params: dict | None = None) -> "WordEmbedding":
        store = VectorStore.load(path)
        if store.ids != vocabulary.terms:
            raise FormatError(f"{path}: stored terms do not match the vocabulary")
        return cls(store.vectors.copy(), vocabulary, dict(params or {}))


@dataclass
class TfidfModel:
    """Per-term inverse document frequencies fit on one corpus."""

    idf: np.ndarray  # (|V|,) float64
    doc_count: int
    vocabulary: Vocabulary
    formula: str = IDF_FORMULA

    def idf_of(self, term: str) -> float:
        """Weight for a known term; unknown terms raise KeyError."""
        return float(self.idf[self.vocabulary.index[term]])

    def save_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            for term, value in zip(self.vocabulary.terms, self.idf):
                handle.write(f"{term}\t{float(value)!r}\n")

    @classmethod
    def load_tsv(cls, path, vocabulary: Vocabulary, doc_count: int) -> "TfidfModel":
        idf = np.zeros(len(vocabulary), dtype=np.float64)
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise FormatError(f"{path}: line {line_no}: expected 2 tab-separated columns")
                term, raw = parts
                if term not in vocabulary.index:
                    raise FormatError(f"{path}: line {line_no}: term {term!r} not in vocabulary")
                idf[vocabulary.index[term]] = float(raw)
        return cls(idf, doc_count, vocabulary)


class TfidfWeighter(BaseEstimator):
    """Fits idf(t) = ln(N / df(t)) over an encoded corpus."""

    def fit(self, docs: Sequence[Sequence[int]], vocabulary: Vocabulary) -> "TfidfWeighter":
        if not docs:
            raise CorpusError("cannot fit TF-IDF on an empty corpus")
        n_docs = len(docs)
        df = vocabulary.doc_freq.astype(np.float64)
        if df.min() < 1:
            raise CorpusError("vocabulary contains a term with document frequency 0")
        if df.max() > n_docs:
            raise ConfigError(
                f"document count {n_docs} is smaller than the vocabulary's max document frequency"
            )
        self.model_ = TfidfModel(np.log(n_docs / df), n_docs, vocabulary)
        return self


def fit_tfidf(docs: Sequence[Sequence[int]], vocabulary: Vocabulary) -> TfidfModel:
    return TfidfWeighter().fit(docs, vocabulary).model_


class SkipGramEmbedder(BaseEstimator):
    """Skip-gram with negative sampling over encoded token-index documents.

    Training is sequential and seeded: the same seed, corpus, and parameters
    produce a byte-identical matrix. Negatives are drawn from the unigram
    distribution raised to the 3/4 power; the learning rate decays linearly
    per processed center position down to min_learning_rate.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        window: int = DEFAULT_WINDOW,
        epochs: int = DEFAULT_EPOCHS,
        negatives: int = DEFAULT_NEGATIVES,
        learning_rate: float = DEFAULT_LEARNING_RATE,
        min_learning_rate: float = DEFAULT_MIN_LEARNING_RATE,
        subsample: float = 0.0,
        seed: int | None = None,
    ):
        self.dim = dim
        self.window = window
        self.epochs = epochs
        self.negatives = negatives
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.subsample = subsample
        self.seed = seed

    def _validate(self, docs) -> None:
        if self.dim < 1:
            raise ConfigError(f"embedding dimension must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.epochs < 0 or self.negatives < 0:
            raise ConfigError("epochs and negatives must be non-negative")
        if self.seed is None:
            raise ConfigError("a fixed RNG seed is required for training")
        if not docs:
            raise CorpusError("cannot train word vectors on an empty corpus")

    def fit(self, docs: Sequence[Sequence[int]], vocabulary: Vocabulary) -> "SkipGramEmbedder":
        self._validate(docs)
        n_terms = len(vocabulary)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))

        vectors = (rng.random((n_terms, self.dim), dtype=np.float32) - 0.5) / self.dim
        context = np.zeros((n_terms, self.dim), dtype=np.float32)

        noise = vocabulary.corpus_freq.astype(np.float64) ** NOISE_POWER
        noise_cdf = np.cumsum(noise / noise.sum())

        keep_prob = None
        if self.subsample > 0.0:
            rel = vocabulary.corpus_freq / vocabulary.corpus_freq.sum()
            keep_prob = np.minimum(1.0, np.sqrt(self.subsample / rel))

        total = max(1, sum(len(d) for d in docs) * self.epochs)
        processed = 0
        for _ in range(self.epochs):
            for doc in docs:
                if keep_prob is not None:
                    doc = [t for t in doc if rng.random() < keep_prob[t]]
                n = len(doc)
                for pos in range(n):
                    lr = max(
                        self.min_learning_rate,
                        self.learning_rate * (1.0 - processed / total),
                    )
                    processed += 1
                    center = doc[pos]
                    lo = max(0, pos - self.window)
                    hi = min(n, pos + self.window + 1)
                    n_ctx = hi - lo - 1
                    if n_ctx <= 0:
                        continue
                    # One negative draw per center position keeps the RNG
                    # stream cheap; updates stay per-pair sequential.
                    neg_block = np.searchsorted(
                        noise_cdf, rng.random((n_ctx, self.negatives)), side="right"
                    )
                    row = 0
                    for ctx_pos in range(lo, hi):
                        if ctx_pos == pos:
                            continue
                        target = doc[ctx_pos]
                        negs = neg_block[row]
                        row += 1
                        negs = negs[negs != target]
                        g_center, g_context, g_negs = skipgram_pair_gradients(
                            vectors[center], context[target], context[negs]
                        )
                        context[target] -= lr * g_context
                        np.subtract.at(context, negs, (lr * g_negs).astype(np.float32))
                        vectors[center] -= lr * g_center

        if not np.isfinite(vectors).all():
            raise FloatingPointError("word-vector training produced non-finite values")
        self.embedding_ = WordEmbedding(vectors, vocabulary, self.get_params())
        self.vectors_ = vectors
        self.context_vectors_ = context
        return self


def train_sgns(
    docs: Sequence[Sequence[int]], vocabulary: Vocabulary, **params
) -> WordEmbedding:
    return SkipGramEmbedder(**params).fit(docs, vocabulary).embedding_


def _check_same_vocabulary(embedding: WordEmbedding, tfidf: TfidfModel) -> None:
    if embedding.vocabulary is tfidf.vocabulary:
        return
    if embedding.vocabulary.terms != tfidf.vocabulary.terms:
        raise ConfigError("embedding and TF-IDF model were fit on different vocabularies")


def embed_document(
    doc: Sequence[int],
    embedding: WordEmbedding,
    tfidf: TfidfModel,
    doc_id: str | None = None,
) -> DocumentVector:
    """Compose the signature: sum of tf(t) * idf(t) * word_vector(t), L2-normalized.

    Documents with no in-vocabulary term (or a zero pre-normalization norm)
    yield the all-zero sentinel, which downstream layers treat as similar
    to nothing.
    """
    _check_same_vocabulary(embedding, tfidf)
    dim = embedding.dim
    if not len(doc):
        return zero_signature(dim, doc_id)
    indices = np.asarray(doc, dtype=np.int64)
    if indices.min() < 0 or indices.max() >= len(embedding.vocabulary):
        raise ConfigError("document contains token indices outside the vocabulary")
    counts = np.bincount(indices, minlength=len(embedding.vocabulary))
    present = np.nonzero(counts)[0]
    weights = counts[present].astype(np.float64) * tfidf.idf[present]
    vector = weights @ embedding.vectors[present].astype(np.float64)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return zero_signature(dim, doc_id)
    return DocumentVector(doc_id, (vector / norm).astype(np.float32), norm="unit")


def vectorize_corpus(
    docs: Iterable[tuple[str, Sequence[int]]],
    embedding: WordEmbedding,
    tfidf: TfidfModel,
) -> VectorStore:
    """One signature per (id, encoded doc), in input order."""
    _check_same_vocabulary(embedding, tfidf)
    store = VectorStore(embedding.dim)
    for doc_id, doc in docs:
        sig = embed_document(doc, embedding, tfidf, doc_id=doc_id)
        store.add(doc_id, sig.vector, NORM_UNIT if sig.norm == "unit" else NORM_RAW)
    return store
