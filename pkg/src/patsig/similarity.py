"""Pairwise cosine similarity, the thresholded patent-to-patent similarity
graph, and free-text semantic search over an index."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._io import atomic_write
from .embedding import DocumentVector, TfidfModel, WordEmbedding, embed_document
from .errors import ConfigError, FormatError, SimilarityUndefinedError
from .forest import NeighborList, RandomProjectionForest
from .text import BigramTable, apply_bigrams, tokenize
from .vectorstore import VectorStore

DEFAULT_THRESHOLD = 0.65
DEFAULT_GRAPH_NEIGHBORS = 100

NO_VOCABULARY_TERMS = "no in-vocabulary terms"


def _as_array(x) -> np.ndarray:
    if isinstance(x, DocumentVector):
        if x.is_zero:
            raise SimilarityUndefinedError(
                f"cosine similarity is undefined for zero-signature vector {x.id!r}"
            )
        return x.vector
    arr = np.asarray(x, dtype=np.float64)
    if not arr.any():
        raise SimilarityUndefinedError("cosine similarity is undefined for a zero vector")
    return arr


def cosine(x, y) -> float:
    """x . y / (|x| |y|), clamped to [-1, 1] against rounding.

    The computation is order-invariant, so cosine(x, y) == cosine(y, x)
    exactly. Zero-signature operands raise SimilarityUndefinedError.
    """
    xv = _as_array(x).astype(np.float64)
    yv = _as_array(y).astype(np.float64)
    if xv.shape != yv.shape:
        raise ConfigError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    score = np.dot(xv, yv) / (np.linalg.norm(xv) * np.linalg.norm(yv))
    return float(min(1.0, max(-1.0, score)))


@dataclass
class SimilarityGraph:
    """Per-source adjacency of above-threshold neighbors, sorted best first.

    Every store id gets an entry; zero-sentinel patents keep an empty list.
    The neighbor count of patent i is the denominator of the temporal
    indicators downstream.
    """

    neighbors: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    n_neighbors: int = DEFAULT_GRAPH_NEIGHBORS
    threshold: float = DEFAULT_THRESHOLD

    def neighbor_count(self, record_id: str) -> int:
        return len(self.neighbors[record_id])

    def __len__(self) -> int:
        return len(self.neighbors)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.neighbors.values())

    def save_tsv(self, path, metadata_path=None, extra_metadata: dict | None = None) -> None:
        with atomic_write(path, "w") as handle:
            handle.write("src\tdst\tscore\n")
            for src, adjacency in self.neighbors.items():
                for dst, score in adjacency:
                    handle.write(f"{src}\t{dst}\t{score:.6f}\n")
        if metadata_path is not None:
            meta = {
                "k": self.n_neighbors,
                "threshold": self.threshold,
                "n_sources": len(self.neighbors),
                "n_edges": self.edge_count(),
            }
            meta.update(extra_metadata or {})
            with atomic_write(metadata_path, "w") as handle:
                json.dump(meta, handle, indent=2, sort_keys=True)
                handle.write("\n")

    @classmethod
    def load_tsv(cls, path, all_ids: Sequence[str] | None = None,
                 n_neighbors: int = DEFAULT_GRAPH_NEIGHBORS,
                 threshold: float = DEFAULT_THRESHOLD) -> "SimilarityGraph":
        neighbors: dict[str, list[tuple[str, float]]] = {}
        if all_ids is not None:
            neighbors = {i: [] for i in all_ids}
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline()
            if header.rstrip("\n").split("\t") != ["src", "dst", "score"]:
                raise FormatError(f"{path}: expected edge TSV header 'src\\tdst\\tscore'")
            for line_no, line in enumerate(handle, start=2):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise FormatError(f"{path}: line {line_no}: expected 3 columns")
                try:
                    score = float(parts[2])
                except ValueError:
                    raise FormatError(f"{path}: line {line_no}: score is not a number") from None
                neighbors.setdefault(parts[0], []).append((parts[1], score))
        return cls(neighbors=neighbors, n_neighbors=n_neighbors, threshold=threshold)


def build_similarity_graph(
    forest: RandomProjectionForest,
    store: VectorStore,
    n_neighbors: int = DEFAULT_GRAPH_NEIGHBORS,
    threshold: float = DEFAULT_THRESHOLD,
    search_breadth: int | None = None,
) -> SimilarityGraph:
    """Top-k neighbors per non-sentinel patent, then the similarity threshold.

    Adjacency is directed per source; i->j and j->i may both exist and carry
    the same score. Sentinel patents get empty adjacency (neighbor count 0).
    """
    if not (-1.0 < threshold <= 1.0):
        raise ConfigError(f"threshold must be in (-1, 1], got {threshold}")
    if n_neighbors < 1:
        raise ConfigError(f"n_neighbors must be >= 1, got {n_neighbors}")
    graph = SimilarityGraph(neighbors={}, n_neighbors=n_neighbors, threshold=threshold)
    for record_id in store.ids:
        if store.is_zero(record_id):
            graph.neighbors[record_id] = []
            continue
        try:
            result = forest.kneighbors_by_id(record_id, n_neighbors, search_breadth)
        except KeyError:
            raise ConfigError(f"patent {record_id!r} is not indexed by the forest") from None
        graph.neighbors[record_id] = [(j, s) for j, s in result.neighbors if s >= threshold]
    return graph


def semantic_search(
    text: str,
    embedding: WordEmbedding,
    tfidf: TfidfModel,
    forest: RandomProjectionForest,
    n_neighbors: int = 10,
    bigrams: BigramTable | None = None,
    search_breadth: int | None = None,
) -> NeighborList:
    """Embed a free-text query exactly like a corpus document, then search.

    A query with no in-vocabulary term returns an empty list with an
    explanatory status instead of raising.
    """
    tokens = tokenize(text)
    if bigrams is not None:
        tokens = apply_bigrams(tokens, bigrams)
    encoded = embedding.vocabulary.encode(tokens)
    signature = embed_document(encoded, embedding, tfidf)
    if signature.is_zero:
        return NeighborList(None, [], n_neighbors, search_breadth or 0, status=NO_VOCABULARY_TERMS)
    return forest.kneighbors(signature, n_neighbors, search_breadth)
