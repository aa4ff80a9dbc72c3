"""Exact top-k cosine retrieval over stored sentence vectors.

Vectors are L2-normalized at insert and stored as float32, so cosine
similarity is a plain dot product. Search is a full scan in fixed-size
blocks with a bounded best-k merge; results are exact, with ties broken
by ascending id so ordering is deterministic everywhere.
"""

import io
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .container import (
    ContainerError,
    append_crc32,
    read_exact,
    read_magic,
    read_version,
    split_checked_payload,
)
from .encoder import EncoderModel

INDEX_MAGIC = b"DSIM"
INDEX_VERSION = 1

DEFAULT_BLOCK_SIZE = 8192
NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SearchHit:
    id: int
    text: str
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked hits, scores non-increasing, ties by ascending id."""

    entries: tuple[SearchHit, ...]
    k: int


class VectorIndex:
    """Immutable store of (id, text, unit vector) rows; built once, then queried."""

    def __init__(self, ids: np.ndarray, vectors: np.ndarray, texts: tuple[str, ...]):
        self.ids = np.ascontiguousarray(ids, dtype=np.uint64)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.texts = tuple(texts)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d matrix")
        n = self.vectors.shape[0]
        if self.ids.shape != (n,) or len(self.texts) != n:
            raise ValueError("ids, vectors, and texts must be index-aligned")
        if len(set(self.ids.tolist())) != n:
            raise ValueError("duplicate id in index")
        if n:
            norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(
                    f"row {worst} is not unit-norm (norm {norms[worst]!r})"
                )

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    # ------------------------------------------------------------------ build

    @classmethod
    def build(cls, items: Iterable[tuple[int, str, np.ndarray]], dim: int | None = None):
        """Normalize and store (id, text, vector) triples.

        Rejects dimension mismatches, duplicate ids, and zero vectors.
        `dim` is only required when `items` may be empty.
        """
        ids: list[int] = []
        texts: list[str] = []
        rows: list[np.ndarray] = []
        for entry_id, text, vector in items:
            v = np.asarray(vector, dtype=np.float64)
            if v.ndim != 1:
                raise ValueError(f"id {entry_id}: vector must be 1-d")
            if dim is None:
                dim = v.shape[0]
            if v.shape[0] != dim:
                raise ValueError(
                    f"id {entry_id}: dimension mismatch: got {v.shape[0]}, index has {dim}"
                )
            if int(entry_id) < 0:
                raise ValueError(f"id {entry_id}: ids must be non-negative")
            norm = np.linalg.norm(v)
            if norm == 0.0:
                raise ValueError(f"id {entry_id}: zero vector cannot be normalized")
            ids.append(int(entry_id))
            texts.append(text)
            rows.append((v / norm).astype(np.float32))
        if dim is None:
            raise ValueError("cannot build an empty index without an explicit dim")
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate id in index: {dupes[0]}")
        vectors = (
            np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
        )
        return cls(np.asarray(ids, dtype=np.uint64), vectors, tuple(texts))

    # ----------------------------------------------------------------- search

    def search(self, query: np.ndarray, k: int,
               block_size: int = DEFAULT_BLOCK_SIZE) -> RetrievalResult:
        """Exact top-k by cosine; k past the entry count returns everything."""
        if k < 1:
            raise ValueError("k must be at least 1")
        if block_size < 1:
            raise ValueError("block_size must be at least 1")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(
                f"query dimension mismatch: got {q.shape}, index has dim {self.dim}"
            )
        norm = np.linalg.norm(q)
        if norm == 0.0:
            raise ValueError("zero query vector")
        q_hat = (q / norm).astype(np.float32)

        k_eff = min(k, self.count)
        if k_eff == 0:
            return RetrievalResult(entries=(), k=k)

        best_scores = np.empty(0, dtype=np.float32)
        best_rows = np.empty(0, dtype=np.int64)
        for start in range(0, self.count, block_size):
            stop = min(start + block_size, self.count)
            # einsum, not @: its row-wise reduction gives bitwise-identical
            # scores regardless of how the scan is blocked (BLAS does not)
            block_scores = np.einsum("ij,j->i", self.vectors[start:stop], q_hat)
            cand_scores = np.concatenate([best_scores, block_scores])
            cand_rows = np.concatenate(
                [best_rows, np.arange(start, stop, dtype=np.int64)]
            )
            order = np.lexsort((self.ids[cand_rows], -cand_scores))[:k_eff]
            best_scores = cand_scores[order]
            best_rows = cand_rows[order]

        entries = tuple(
            SearchHit(id=int(self.ids[r]), text=self.texts[r], score=float(s))
            for r, s in zip(best_rows, best_scores)
        )
        return RetrievalResult(entries=entries, k=k)

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        blob = b"".join(t.encode("utf-8") for t in self.texts)
        offsets = np.zeros(self.count, dtype="<u8")
        pos = 0
        for i, t in enumerate(self.texts):
            offsets[i] = pos
            pos += len(t.encode("utf-8"))
        payload = (
            INDEX_MAGIC
            + struct.pack("<IIQ", INDEX_VERSION, self.dim, self.count)
            + self.vectors.astype("<f4", copy=False).tobytes()
            + self.ids.astype("<u8", copy=False).tobytes()
            + offsets.tobytes()
            + struct.pack("<Q", len(blob))
            + blob
        )
        with open(path, "wb") as f:
            f.write(append_crc32(payload))

    @classmethod
    def load(cls, path) -> "VectorIndex":
        with open(path, "rb") as fh:
            data = fh.read()
        f = io.BytesIO(data)
        read_magic(f, INDEX_MAGIC)
        read_version(f, INDEX_VERSION)
        dim, count = struct.unpack("<IQ", read_exact(f, 12, "index header"))
        vec_bytes = read_exact(f, count * dim * 4, "vector section")
        ids_bytes = read_exact(f, count * 8, "id section")
        off_bytes = read_exact(f, count * 8, "text offset table")
        (blob_len,) = struct.unpack("<Q", read_exact(f, 8, "text blob length"))
        blob = read_exact(f, blob_len, "text blob")
        read_exact(f, 4, "checksum")
        if f.read(1):
            raise ContainerError("trailing bytes after checksum")
        split_checked_payload(data, "vector index")

        vectors = np.frombuffer(vec_bytes, dtype="<f4").reshape(count, dim)
        ids = np.frombuffer(ids_bytes, dtype="<u8")
        offsets = np.frombuffer(off_bytes, dtype="<u8")
        bounds = np.concatenate([offsets, [blob_len]]).astype(np.int64)
        if np.any(np.diff(bounds) < 0) or (count and bounds[0] != 0):
            raise ContainerError("corrupt text offset table")
        texts = tuple(
            blob[bounds[i] : bounds[i + 1]].decode("utf-8") for i in range(count)
        )
        return cls(ids.copy(), vectors.copy(), texts)


def encode_corpus(
    model: EncoderModel,
    texts: Iterable[str],
    block_size: int = 1024,
    start_id: int = 0,
) -> Iterator[tuple[int, str, np.ndarray]]:
    """Stream (id, text, vector) triples with sequential ids.

    Texts are encoded in blocks so peak memory is bounded by block_size,
    not the corpus length; order is preserved.
    """
    if block_size < 1:
        raise ValueError("block_size must be at least 1")

    def flush(buf: list[str], base: int):
        enc = model.encode_batch(buf)
        for j, t in enumerate(buf):
            yield base + j, t, enc.vectors[j].copy()

    buf: list[str] = []
    next_id = start_id
    for text in texts:
        buf.append(text)
        if len(buf) == block_size:
            yield from flush(buf, next_id)
            next_id += len(buf)
            buf = []
    if buf:
        yield from flush(buf, next_id)
