"""Binary vector store (PSV1): ids, norm flags, and dense float32 vectors.

Layout (little-endian): magic "PSV1", u32 version, u32 dim, u64 count, then
per record: u16 id length, UTF-8 id bytes, u8 norm flag, dim x f32 vector.
The same layout stores word-embedding matrices, with terms as ids.
"""

from __future__ import annotations

import io
import struct
from typing import Iterable, Sequence

import numpy as np

from ._io import Reader, atomic_write
from .errors import BadMagicError, ConfigError, FormatError, VersionError

MAGIC = b"PSV1"
VERSION = 1

NORM_RAW = 0
NORM_UNIT = 1


class VectorStore:
    """In-memory collection of (id, norm flag, float32 vector) rows."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"vector dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.ids: list[str] = []
        self.flags: list[int] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._index

    def add(self, record_id: str, vector: np.ndarray, flag: int) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise ConfigError(f"vector for {record_id!r} has shape {vector.shape}, expected ({self.dim},)")
        if record_id in self._index:
            raise ConfigError(f"duplicate id {record_id!r} in vector store")
        if flag not in (NORM_RAW, NORM_UNIT):
            raise ConfigError(f"invalid norm flag {flag}")
        self._index[record_id] = len(self.ids)
        self.ids.append(record_id)
        self.flags.append(int(flag))
        self._rows.append(vector)
        self._matrix = None

    @property
    def vectors(self) -> np.ndarray:
        """(count, dim) float32 matrix of all rows."""
        if self._matrix is None or len(self._matrix) != len(self._rows):
            if self._rows:
                self._matrix = np.vstack(self._rows).astype(np.float32, copy=False)
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float32)
        return self._matrix

    def index_of(self, record_id: str) -> int:
        return self._index[record_id]

    def vector(self, record_id: str) -> np.ndarray:
        return self._rows[self._index[record_id]]

    def flag(self, record_id: str) -> int:
        return self.flags[self._index[record_id]]

    def is_zero(self, record_id: str) -> bool:
        i = self._index[record_id]
        return self.flags[i] == NORM_RAW and not self._rows[i].any()

    def iter_rows(self) -> Iterable[tuple[str, int, np.ndarray]]:
        for i, record_id in enumerate(self.ids):
            yield record_id, self.flags[i], self._rows[i]

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IIQ", VERSION, self.dim, len(self.ids)))
        for record_id, flag, row in self.iter_rows():
            encoded = record_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ConfigError(f"id {record_id!r} exceeds 65535 encoded bytes")
            buf.write(struct.pack("<H", len(encoded)))
            buf.write(encoded)
            buf.write(struct.pack("<B", flag))
            buf.write(row.astype("<f4", copy=False).tobytes())
        return buf.getvalue()

    def save(self, path) -> None:
        with atomic_write(path) as handle:
            handle.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "<bytes>") -> "VectorStore":
        reader = Reader(data, name)
        magic = reader.take(4)
        if magic != MAGIC:
            raise BadMagicError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
        version, dim, count = reader.unpack("<IIQ")
        if version != VERSION:
            raise VersionError(f"{name}: unsupported vector store version {version}")
        store = cls(dim)
        for _ in range(count):
            (id_len,) = reader.unpack("<H")
            record_id = reader.take(id_len).decode("utf-8")
            (flag,) = reader.unpack("<B")
            row = np.frombuffer(reader.take(4 * dim), dtype="<f4").copy()
            store.add(record_id, row, flag)
        if reader.remaining():
            raise FormatError(f"{name}: {reader.remaining()} trailing bytes after declared records")
        return store

    @classmethod
    def load(cls, path) -> "VectorStore":
        with open(path, "rb") as handle:
            data = handle.read()
        return cls.from_bytes(data, name=str(path))


def store_from_arrays(ids: Sequence[str], vectors: np.ndarray, flags: Sequence[int]) -> VectorStore:
    vectors = np.asarray(vectors, dtype=np.float32)
    store = VectorStore(vectors.shape[1])
    for record_id, row, flag in zip(ids, vectors, flags):
        store.add(record_id, row, flag)
    return store
