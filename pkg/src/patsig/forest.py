"""Approximate K-nearest-neighbor search with a forest of random-projection
trees, plus the exhaustive brute-force oracle it approximates.

Each tree splits recursively: two distinct items are sampled and the node's
hyperplane is their perpendicular bisector; items are partitioned by the
sign of (normal . x - offset). Queries walk a single priority queue over
all trees' nodes keyed by margin distance to the splitting hyperplanes,
inspecting leaf cells until the search breadth is exhausted; the gathered
candidates are then rescored with the exact cosine, so the approximation
affects which items are found, never their scores.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._io import Reader, atomic_write
from .embedding import DocumentVector
from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    CorpusError,
    VersionError,
)
from .vectorstore import VectorStore

MAGIC = b"RPF1"
VERSION = 1

DEFAULT_N_TREES = 100
DEFAULT_LEAF_CAPACITY = 16
SPLIT_ATTEMPTS = 4  # 1 initial draw + 3 retries before the forced balanced split

_TAG_INTERNAL = 0
_TAG_LEAF = 1


@dataclass
class NeighborList:
    """Ranked (id, cosine similarity) pairs for one query, best first."""

    query_id: str | None
    neighbors: list[tuple[str, float]]
    n_requested: int
    search_breadth: int
    status: str = "ok"

    def ids(self) -> list[str]:
        return [i for i, _ in self.neighbors]

    def __len__(self) -> int:
        return len(self.neighbors)


class RpTree:
    """Flat node list; internal nodes are (normal, offset, left, right) tuples,
    leaves are sorted int32 item-index arrays."""

    def __init__(self, nodes: list):
        self.nodes = nodes

    def leaf_items(self) -> list[np.ndarray]:
        return [n for n in self.nodes if isinstance(n, np.ndarray)]


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim).astype(np.float32)
        n = float(np.linalg.norm(v))
        if n > 0.0:
            return v / np.float32(n)


def _split_items(
    vectors: np.ndarray, items: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    for _ in range(SPLIT_ATTEMPTS):
        pick = rng.choice(len(items), size=2, replace=False)
        a = vectors[items[pick[0]]]
        b = vectors[items[pick[1]]]
        diff = a - b
        norm = float(np.linalg.norm(diff))
        if norm == 0.0:
            continue
        normal = diff / np.float32(norm)
        offset = float(np.dot(normal, (a + b) * np.float32(0.5)))
        margins = vectors[items] @ normal - np.float32(offset)
        right = margins > 0.0
        n_right = int(right.sum())
        if n_right == 0 or n_right == len(items):
            continue
        return normal, offset, items[~right], items[right]
    # Degenerate set (duplicates or one-sided draws): random balanced split.
    # The stored hyperplane is only a routing hint; both children are always
    # enqueued at query time.
    perm = rng.permutation(len(items))
    half = len(items) // 2
    return _random_unit(rng, vectors.shape[1]), 0.0, items[perm[:half]], items[perm[half:]]


def _build_tree(
    vectors: np.ndarray, items: np.ndarray, leaf_capacity: int, rng: np.random.Generator
) -> RpTree:
    nodes: list = []
    # Explicit stack, left subtree first, so the RNG consumption order matches
    # a plain preorder recursion without risking the recursion limit.
    stack: list[tuple[np.ndarray, int, int]] = [(items, -1, 0)]
    while stack:
        node_items, parent, slot = stack.pop()
        index = len(nodes)
        if parent >= 0:
            nodes[parent][2 + slot] = index
        if len(node_items) <= leaf_capacity:
            nodes.append(np.sort(node_items))
            continue
        normal, offset, left_items, right_items = _split_items(vectors, node_items, rng)
        nodes.append([normal, offset, -1, -1])
        stack.append((right_items, index, 1))
        stack.append((left_items, index, 0))
    return RpTree([n if isinstance(n, np.ndarray) else tuple(n) for n in nodes])


@dataclass
class _PackedForest:
    """Flat cross-tree node arrays for the jitted traversal."""

    roots: np.ndarray        # (n_trees,) i32 global node index of each root
    kinds: np.ndarray        # (total_nodes,) u8
    normal_rows: np.ndarray  # (total_nodes,) i32 row into normals, -1 for leaves
    offsets: np.ndarray      # (total_nodes,) f32
    children: np.ndarray     # (total_nodes, 2) i32 global indices
    leaf_bounds: np.ndarray  # (total_nodes, 2) i32 [start, end) into leaf_items
    leaf_items: np.ndarray   # (sum of leaf sizes,) i32
    normals: np.ndarray      # (n_internal, dim) f32
    n_leaves: int = 0


def _pack_trees(trees: Sequence[RpTree]) -> _PackedForest:
    total = sum(len(t.nodes) for t in trees)
    kinds = np.zeros(total, dtype=np.uint8)
    normal_rows = np.full(total, -1, dtype=np.int32)
    offsets = np.zeros(total, dtype=np.float32)
    children = np.zeros((total, 2), dtype=np.int32)
    leaf_bounds = np.zeros((total, 2), dtype=np.int32)
    roots = np.zeros(len(trees), dtype=np.int32)
    normals: list[np.ndarray] = []
    leaf_parts: list[np.ndarray] = []
    leaf_cursor = 0
    base = 0
    for t, tree in enumerate(trees):
        roots[t] = base
        for local, node in enumerate(tree.nodes):
            g = base + local
            if isinstance(node, np.ndarray):
                kinds[g] = _TAG_LEAF
                leaf_bounds[g, 0] = leaf_cursor
                leaf_cursor += len(node)
                leaf_bounds[g, 1] = leaf_cursor
                leaf_parts.append(node)
            else:
                normal, offset, left, right = node
                normal_rows[g] = len(normals)
                normals.append(normal)
                offsets[g] = offset
                children[g, 0] = base + left
                children[g, 1] = base + right
        base += len(tree.nodes)
    packed_normals = (
        np.vstack(normals).astype(np.float32, copy=False)
        if normals
        else np.zeros((0, 1), dtype=np.float32)
    )
    packed_leaves = (
        np.concatenate(leaf_parts).astype(np.int32, copy=False)
        if leaf_parts
        else np.zeros(0, dtype=np.int32)
    )
    return _PackedForest(
        roots, kinds, normal_rows, offsets, children, leaf_bounds, packed_leaves,
        packed_normals, n_leaves=int((kinds == _TAG_LEAF).sum()),
    )


@numba.njit(cache=True, inline="always")
def _heap_push(pri, order, node, size, p, o, v):
    i = size
    pri[i] = p
    order[i] = o
    node[i] = v
    while i > 0:
        parent = (i - 1) // 2
        if (pri[i], order[i]) < (pri[parent], order[parent]):
            pri[i], pri[parent] = pri[parent], pri[i]
            order[i], order[parent] = order[parent], order[i]
            node[i], node[parent] = node[parent], node[i]
            i = parent
        else:
            break
    return size + 1


@numba.njit(cache=True, inline="always")
def _heap_pop(pri, order, node, size):
    top = node[0]
    top_pri = pri[0]
    size -= 1
    pri[0] = pri[size]
    order[0] = order[size]
    node[0] = node[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and (pri[left], order[left]) < (pri[smallest], order[smallest]):
            smallest = left
        if right < size and (pri[right], order[right]) < (pri[smallest], order[smallest]):
            smallest = right
        if smallest == i:
            break
        pri[i], pri[smallest] = pri[smallest], pri[i]
        order[i], order[smallest] = order[smallest], order[i]
        node[i], node[smallest] = node[smallest], node[i]
        i = smallest
    return top, top_pri, size


@numba.njit(cache=True)
def _gather_leaves(
    roots, kinds, normal_rows, offsets, children, leaf_bounds, leaf_items, normals,
    query, max_leaves, seen, out,
):
    """Best-first traversal over all trees; min-heap on (-priority, push order).

    Inspects up to max_leaves leaf cells, writes their distinct items into
    `out` (using the zeroed byte mask `seen`), and returns the count.
    """
    capacity = kinds.shape[0] + 1
    heap_pri = np.empty(capacity, np.float64)
    heap_order = np.empty(capacity, np.int64)
    heap_node = np.empty(capacity, np.int32)
    size = 0
    counter = 0
    for t in range(roots.shape[0]):
        size = _heap_push(heap_pri, heap_order, heap_node, size, -np.inf, counter, roots[t])
        counter += 1
    dim = query.shape[0]
    n_out = 0
    leaves_done = 0
    while size > 0 and leaves_done < max_leaves:
        node, neg_priority, size = _heap_pop(heap_pri, heap_order, heap_node, size)
        if kinds[node] == 1:
            start = leaf_bounds[node, 0]
            end = leaf_bounds[node, 1]
            for j in range(start, end):
                item = leaf_items[j]
                if seen[item] == 0:
                    seen[item] = 1
                    out[n_out] = item
                    n_out += 1
            leaves_done += 1
            continue
        row = normal_rows[node]
        margin = 0.0
        for j in range(dim):
            margin += normals[row, j] * query[j]
        margin -= offsets[node]
        priority = -neg_priority
        size = _heap_push(
            heap_pri, heap_order, heap_node, size,
            -min(priority, margin), counter, children[node, 1],
        )
        counter += 1
        size = _heap_push(
            heap_pri, heap_order, heap_node, size,
            -min(priority, -margin), counter, children[node, 0],
        )
        counter += 1
    return n_out


def _cosine_scores(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Exact cosine of query against each row, computed in float64."""
    rows64 = rows.astype(np.float64)
    q64 = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q64)
    norms = np.linalg.norm(rows64, axis=1)
    scores = rows64 @ q64 / (norms * qn)
    return np.clip(scores, -1.0, 1.0)


def _rank_top_k(scores: np.ndarray, candidates: np.ndarray, ids: Sequence[str], k: int):
    """Top-k of (score desc, id asc) without sorting the full candidate set."""
    k_eff = min(k, scores.shape[0])
    if k_eff == scores.shape[0]:
        contenders = np.arange(scores.shape[0])
    else:
        top = np.argpartition(-scores, k_eff - 1)[:k_eff]
        kth_score = scores[top].min()
        contenders = np.nonzero(scores >= kth_score)[0]
    ranked = sorted(
        ((float(scores[i]), ids[candidates[i]]) for i in contenders),
        key=lambda pair: (-pair[0], pair[1]),
    )[:k_eff]
    return [(i, s) for s, i in ranked]


def _query_vector(query) -> tuple[np.ndarray, bool]:
    if isinstance(query, DocumentVector):
        return query.vector, query.is_zero
    arr = np.asarray(query, dtype=np.float32)
    return arr, not arr.any()


class RandomProjectionForest(BaseEstimator):
    """Forest of random-projection trees over unit vectors, cosine metric.

    Zero (sentinel) rows are excluded from every tree and never returned.
    Building is deterministic for a fixed seed: tree t uses an RNG stream
    spawned from (seed, t), so per-tree construction order does not matter.
    `search_breadth` is the number of leaf cells a query may inspect; the
    default is n_trees * n_neighbors.
    """

    def __init__(
        self,
        n_trees: int = DEFAULT_N_TREES,
        leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
        seed: int | None = None,
    ):
        self.n_trees = n_trees
        self.leaf_capacity = leaf_capacity
        self.seed = seed

    def fit(self, X, ids: Sequence[str] | None = None) -> "RandomProjectionForest":
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.leaf_capacity < 1:
            raise ConfigError(f"leaf_capacity must be >= 1, got {self.leaf_capacity}")
        if self.seed is None or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("a build seed in [0, 2**64) is required")
        X = check_array(X, dtype=np.float32)
        if ids is None:
            ids = [str(i) for i in range(X.shape[0])]
        ids = list(ids)
        if len(ids) != X.shape[0]:
            raise ConfigError(f"{len(ids)} ids for {X.shape[0]} vectors")
        if len(set(ids)) != len(ids):
            raise ConfigError("item ids must be unique")

        norms = np.linalg.norm(X, axis=1)
        keep = norms > 0.0
        if not keep.any():
            raise CorpusError("no non-zero vectors to index (all rows are zero sentinels)")
        vectors = X[keep]
        kept_norms = norms[keep]
        # Rows that are already unit-norm are stored verbatim so query scores
        # match cosines recomputed from the source store bit for bit.
        off_unit = np.abs(kept_norms - 1.0) > 1e-3
        if off_unit.any():
            vectors = vectors.copy()
            vectors[off_unit] /= kept_norms[off_unit][:, None]
        self.ids_ = [i for i, k in zip(ids, keep) if k]
        self.vectors_ = np.ascontiguousarray(vectors, dtype=np.float32)
        self.id_index_ = {i: n for n, i in enumerate(self.ids_)}
        self.dim_ = int(X.shape[1])

        items = np.arange(len(self.ids_), dtype=np.int32)
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(t,))
            )
            self.trees_.append(_build_tree(self.vectors_, items, self.leaf_capacity, rng))
        self._packed = _pack_trees(self.trees_)
        return self

    def kneighbors(
        self,
        query,
        n_neighbors: int = 10,
        search_breadth: int | None = None,
        exclude_id: str | None = None,
    ) -> NeighborList:
        check_is_fitted(self, "trees_")
        if n_neighbors < 1:
            raise ConfigError(f"n_neighbors must be >= 1, got {n_neighbors}")
        if search_breadth is None:
            search_breadth = self.n_trees * n_neighbors
        if search_breadth < 1:
            raise ConfigError(f"search_breadth must be >= 1, got {search_breadth}")
        query32, is_zero = _query_vector(query)
        if is_zero:
            return NeighborList(
                exclude_id, [], n_neighbors, search_breadth, status="zero-signature query"
            )
        if query32.shape != (self.dim_,):
            raise ConfigError(f"query has shape {query32.shape}, expected ({self.dim_},)")

        packed = self._packed
        max_leaves = min(search_breadth, packed.n_leaves)
        out = np.empty(len(self.ids_), dtype=np.int32)
        seen = np.zeros(len(self.ids_), dtype=np.uint8)
        count = _gather_leaves(
            packed.roots, packed.kinds, packed.normal_rows, packed.offsets,
            packed.children, packed.leaf_bounds, packed.leaf_items, packed.normals,
            np.ascontiguousarray(query32, dtype=np.float32), max_leaves, seen, out,
        )
        candidates = out[:count]
        if exclude_id is not None and exclude_id in self.id_index_:
            candidates = candidates[candidates != self.id_index_[exclude_id]]
        if candidates.size == 0:
            return NeighborList(exclude_id, [], n_neighbors, search_breadth)
        vectors64, row_norms = self._scoring_arrays()
        q64 = query32.astype(np.float64)
        raw = vectors64[candidates] @ q64 / (row_norms[candidates] * np.linalg.norm(q64))
        scores = np.clip(raw, -1.0, 1.0)
        ranked = _rank_top_k(scores, candidates, self.ids_, n_neighbors)
        return NeighborList(exclude_id, ranked, n_neighbors, search_breadth)

    def kneighbors_by_id(
        self,
        record_id: str,
        n_neighbors: int = 10,
        search_breadth: int | None = None,
    ) -> NeighborList:
        """Query with an indexed item's own vector; the item itself is excluded."""
        check_is_fitted(self, "trees_")
        vector = self.vectors_[self.id_index_[record_id]]
        return self.kneighbors(vector, n_neighbors, search_breadth, exclude_id=record_id)

    def _scoring_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        cached = getattr(self, "_vectors64", None)
        if cached is None:
            vectors64 = self.vectors_.astype(np.float64)
            self._vectors64 = (vectors64, np.linalg.norm(vectors64, axis=1))
            cached = self._vectors64
        return cached

    # -- persistence ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        check_is_fitted(self, "trees_")
        out = bytearray()
        out += MAGIC
        out += struct.pack(
            "<IIIIQQ",
            VERSION,
            self.dim_,
            len(self.trees_),
            self.leaf_capacity,
            len(self.ids_),
            self.seed,
        )
        for record_id in self.ids_:
            encoded = record_id.encode("utf-8")
            out += struct.pack("<H", len(encoded))
            out += encoded
        out += self.vectors_.astype("<f4", copy=False).tobytes()
        for tree in self.trees_:
            out += struct.pack("<I", len(tree.nodes))
            for node in tree.nodes:
                if isinstance(node, np.ndarray):
                    out += struct.pack("<BI", _TAG_LEAF, len(node))
                    out += node.astype("<u4", copy=False).tobytes()
                else:
                    normal, offset, left, right = node
                    out += struct.pack("<B", _TAG_INTERNAL)
                    out += normal.astype("<f4", copy=False).tobytes()
                    out += struct.pack("<fII", offset, left, right)
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        return bytes(out)

    def save(self, path) -> None:
        with atomic_write(path) as handle:
            handle.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "<bytes>") -> "RandomProjectionForest":
        if len(data) < 4:
            raise BadMagicError(f"{name}: file too short for magic bytes")
        if data[:4] != MAGIC:
            raise BadMagicError(f"{name}: bad magic {data[:4]!r}, expected {MAGIC!r}")
        reader = Reader(data[:-4], name)
        reader.take(4)
        version, dim, n_trees, leaf_capacity, count, seed = reader.unpack("<IIIIQQ")
        if version != VERSION:
            raise VersionError(f"{name}: unsupported index version {version}")
        ids = []
        for _ in range(count):
            (id_len,) = reader.unpack("<H")
            ids.append(reader.take(id_len).decode("utf-8"))
        vectors = np.frombuffer(reader.take(4 * dim * count), dtype="<f4").reshape(count, dim).copy()
        trees = []
        for _ in range(n_trees):
            (n_nodes,) = reader.unpack("<I")
            nodes: list = []
            for _ in range(n_nodes):
                (tag,) = reader.unpack("<B")
                if tag == _TAG_LEAF:
                    (length,) = reader.unpack("<I")
                    items = np.frombuffer(reader.take(4 * length), dtype="<u4").astype(np.int32)
                    nodes.append(items)
                elif tag == _TAG_INTERNAL:
                    normal = np.frombuffer(reader.take(4 * dim), dtype="<f4").copy()
                    offset, left, right = reader.unpack("<fII")
                    nodes.append((normal, float(offset), int(left), int(right)))
                else:
                    raise VersionError(f"{name}: unknown node tag {tag}")
            trees.append(RpTree(nodes))
        if reader.remaining():
            raise ChecksumError(f"{name}: {reader.remaining()} unexpected bytes before checksum")
        (stored_crc,) = struct.unpack("<I", data[-4:])
        if zlib.crc32(data[:-4]) != stored_crc:
            raise ChecksumError(f"{name}: CRC32 mismatch")

        forest = cls(n_trees=n_trees, leaf_capacity=leaf_capacity, seed=seed)
        forest.dim_ = dim
        forest.ids_ = ids
        forest.id_index_ = {i: n for n, i in enumerate(ids)}
        forest.vectors_ = vectors
        forest.trees_ = trees
        forest._packed = _pack_trees(trees)
        return forest

    @classmethod
    def load(cls, path) -> "RandomProjectionForest":
        with open(path, "rb") as handle:
            data = handle.read()
        return cls.from_bytes(data, name=str(path))


def build_forest(
    store: VectorStore,
    n_trees: int = DEFAULT_N_TREES,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    seed: int | None = None,
) -> RandomProjectionForest:
    """Index a vector store (zero sentinels excluded)."""
    if len(store) == 0:
        raise CorpusError("cannot index an empty vector store")
    forest = RandomProjectionForest(n_trees=n_trees, leaf_capacity=leaf_capacity, seed=seed)
    return forest.fit(store.vectors, store.ids)


def save_index(forest: RandomProjectionForest, path) -> None:
    forest.save(path)


def load_index(path) -> RandomProjectionForest:
    return RandomProjectionForest.load(path)


def brute_force_knn(
    store: VectorStore, query, k: int, exclude_id: str | None = None
) -> NeighborList:
    """Exact top-k by cosine over all non-sentinel items; ties broken by ascending id."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    query32, is_zero = _query_vector(query)
    if is_zero:
        return NeighborList(exclude_id, [], k, len(store), status="zero-signature query")
    matrix = store.vectors
    norms = np.linalg.norm(matrix, axis=1)
    keep = norms > 0.0
    if exclude_id is not None and exclude_id in store:
        keep[store.index_of(exclude_id)] = False
    indices = np.nonzero(keep)[0]
    if indices.size == 0:
        return NeighborList(exclude_id, [], k, len(store))
    scores = _cosine_scores(matrix[indices], query32)
    ranked = _rank_top_k(scores, indices, store.ids, k)
    return NeighborList(exclude_id, ranked, k, len(store))
