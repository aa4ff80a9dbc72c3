"""Okapi BM25 keyword baseline over the same corpus as the vector index.

Documents are tokenized with the encoder's hashing tokenizer so that the
dense and keyword systems see identical term boundaries; what differs is
only the representation. IDF uses the non-negative variant
ln((N - df + 0.5) / (df + 0.5) + 1).
"""

import io
import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .container import (
    ContainerError,
    append_crc32,
    read_exact,
    read_magic,
    read_version,
    split_checked_payload,
)
from .encoder import Tokenizer
from .index import RetrievalResult, SearchHit

BM25_MAGIC = b"DBM2"
BM25_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass
class InvertedIndex:
    """Term postings plus the per-document statistics BM25 scoring needs."""

    postings: dict[int, list[tuple[int, int]]]  # term -> [(doc id, tf)], doc-sorted
    doc_lengths: np.ndarray
    avg_doc_length: float
    doc_count: int
    texts: tuple[str, ...]
    tokenizer: Tokenizer = field(default_factory=Tokenizer)
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def __post_init__(self):
        if self.doc_count != len(self.texts) or self.doc_count != len(self.doc_lengths):
            raise ValueError("doc_count must match texts and doc_lengths")
        for term, plist in self.postings.items():
            for doc, tf in plist:
                if not 0 <= doc < self.doc_count:
                    raise ValueError(f"posting for term {term} names unknown doc {doc}")
                if tf < 1:
                    raise ValueError(f"posting for term {term} has non-positive tf")


def build_bm25(
    texts: list[str],
    tokenizer: Tokenizer | None = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> InvertedIndex:
    """Index a corpus; postings come out sorted by document id."""
    if tokenizer is None:
        tokenizer = Tokenizer()
    postings: dict[int, list[tuple[int, int]]] = {}
    doc_lengths = np.zeros(len(texts), dtype=np.int64)
    for doc_id, text in enumerate(texts):
        token_ids = tokenizer.tokenize(text)
        doc_lengths[doc_id] = len(token_ids)
        for term, tf in sorted(Counter(token_ids).items()):
            postings.setdefault(term, []).append((doc_id, tf))
    avg = float(doc_lengths.mean()) if len(texts) else 0.0
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=len(texts),
        texts=tuple(texts),
        tokenizer=tokenizer,
        k1=k1,
        b=b,
    )


def idf(doc_count: int, doc_frequency: int) -> float:
    return math.log((doc_count - doc_frequency + 0.5) / (doc_frequency + 0.5) + 1.0)


def bm25_search(index: InvertedIndex, query: str, k: int) -> RetrievalResult:
    """Top-k Okapi scoring; unknown terms contribute zero, ties go to lower ids.

    Only documents with positive score are returned, so an all-unknown
    query yields an empty result.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if index.doc_count == 0:
        return RetrievalResult(entries=(), k=k)
    scores = np.zeros(index.doc_count, dtype=np.float64)
    touched: set[int] = set()
    for term in index.tokenizer.tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index.doc_count, len(plist))
        for doc, tf in plist:
            length_norm = 1.0 - index.b + index.b * (
                float(index.doc_lengths[doc]) / index.avg_doc_length
            )
            scores[doc] += term_idf * (index.k1 + 1.0) * tf / (tf + index.k1 * length_norm)
            touched.add(doc)
    candidates = sorted(d for d in touched if scores[d] > 0.0)
    if not candidates:
        return RetrievalResult(entries=(), k=k)
    cand = np.asarray(candidates, dtype=np.int64)
    order = np.lexsort((cand, -scores[cand]))[:k]
    entries = tuple(
        SearchHit(id=int(cand[i]), text=index.texts[cand[i]], score=float(scores[cand[i]]))
        for i in order
    )
    return RetrievalResult(entries=entries, k=k)


# ---------------------------------------------------------------- persistence


def save_bm25(index: InvertedIndex, path) -> None:
    parts = [
        BM25_MAGIC,
        struct.pack("<I", BM25_VERSION),
        struct.pack(
            "<ddIBQ",
            index.k1,
            index.b,
            index.tokenizer.vocab_size,
            1 if index.tokenizer.lowercase else 0,
            index.doc_count,
        ),
        np.asarray(index.doc_lengths, dtype="<u4").tobytes(),
        struct.pack("<I", len(index.postings)),
    ]
    for term in sorted(index.postings):
        plist = index.postings[term]
        parts.append(struct.pack("<II", term, len(plist)))
        arr = np.asarray(plist, dtype="<u4")
        parts.append(arr.tobytes())
    blob = b"".join(t.encode("utf-8") for t in index.texts)
    offsets = np.zeros(index.doc_count, dtype="<u8")
    pos = 0
    for i, t in enumerate(index.texts):
        offsets[i] = pos
        pos += len(t.encode("utf-8"))
    parts.append(offsets.tobytes())
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    with open(path, "wb") as f:
        f.write(append_crc32(b"".join(parts)))


def load_bm25(path) -> InvertedIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    f = io.BytesIO(data)
    read_magic(f, BM25_MAGIC)
    read_version(f, BM25_VERSION)
    k1, b, vocab_size, lowercase, doc_count = struct.unpack(
        "<ddIBQ", read_exact(f, 29, "bm25 header")
    )
    doc_lengths = np.frombuffer(
        read_exact(f, doc_count * 4, "document lengths"), dtype="<u4"
    ).astype(np.int64)
    (n_terms,) = struct.unpack("<I", read_exact(f, 4, "term count"))
    postings: dict[int, list[tuple[int, int]]] = {}
    for _ in range(n_terms):
        term, df = struct.unpack("<II", read_exact(f, 8, "posting header"))
        raw = np.frombuffer(read_exact(f, df * 8, "posting list"), dtype="<u4")
        postings[term] = [(int(raw[2 * i]), int(raw[2 * i + 1])) for i in range(df)]
    off_bytes = read_exact(f, doc_count * 8, "text offset table")
    (blob_len,) = struct.unpack("<Q", read_exact(f, 8, "text blob length"))
    blob = read_exact(f, blob_len, "text blob")
    read_exact(f, 4, "checksum")
    if f.read(1):
        raise ContainerError("trailing bytes after checksum")
    split_checked_payload(data, "bm25 index")

    offsets = np.frombuffer(off_bytes, dtype="<u8")
    bounds = np.concatenate([offsets, [blob_len]]).astype(np.int64)
    if np.any(np.diff(bounds) < 0) or (doc_count and bounds[0] != 0):
        raise ContainerError("corrupt text offset table")
    texts = tuple(
        blob[bounds[i] : bounds[i + 1]].decode("utf-8") for i in range(doc_count)
    )
    avg = float(doc_lengths.mean()) if doc_count else 0.0
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=doc_count,
        texts=texts,
        tokenizer=Tokenizer(vocab_size=vocab_size, lowercase=bool(lowercase)),
        k1=k1,
        b=b,
    )
