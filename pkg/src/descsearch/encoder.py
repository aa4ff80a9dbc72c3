"""Compact trainable text encoder.

Texts are tokenized with a deterministic hashing tokenizer, token vectors
are looked up in an embedding table, mean-pooled, and linearly projected
to a d-dimensional output vector. Two independent instances of this model
(one for sentences, one for descriptions) form the dual encoder; the
backward pass here is what the training loop differentiates through.
"""

import hashlib
import re
import struct
from dataclasses import dataclass

import numpy as np

from .container import (
    ContainerError,
    read_exact,
    read_magic,
    read_version,
)

CHECKPOINT_MAGIC = b"DENC"
CHECKPOINT_VERSION = 1

UNK_ID = 0

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def _hash_token(token: str, vocab_size: int) -> int:
    # blake2b rather than hash(): stable across processes and runs.
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (vocab_size - 1) + 1


@dataclass(frozen=True)
class Tokenizer:
    """Hashing tokenizer over \\w+ runs; id 0 is reserved for UNK."""

    vocab_size: int = 65536
    lowercase: bool = True

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")

    def tokenize(self, text: str) -> list[int]:
        if self.lowercase:
            text = text.lower()
        words = _WORD_RE.findall(text)
        if not words:
            return [UNK_ID]
        return [_hash_token(w, self.vocab_size) for w in words]


@dataclass(frozen=True)
class EncodedText:
    vector: np.ndarray
    token_count: int


@dataclass
class BatchEncoding:
    """Forward-pass cache for a batch of texts encoded by one model."""

    vectors: np.ndarray  # (n, d)
    mean_embeddings: np.ndarray  # (n, h)
    token_ids: list[np.ndarray]


@dataclass
class TextGradients:
    """Gradients of one encode() call: only the touched embedding rows."""

    embedding_rows: dict[int, np.ndarray]
    projection: np.ndarray
    bias: np.ndarray


class EncoderModel:
    """Mean-pooling encoder: embedding table (vocab x h) -> projection (h x d)."""

    def __init__(self, tokenizer: Tokenizer, embedding, projection, bias):
        self.tokenizer = tokenizer
        self.embedding = np.array(embedding, dtype=np.float64)
        self.projection = np.array(projection, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        if self.embedding.ndim != 2 or self.embedding.shape[0] != tokenizer.vocab_size:
            raise ValueError("embedding table must be (vocab_size, hidden)")
        if self.projection.shape != (self.embedding.shape[1], self.bias.shape[0]):
            raise ValueError("projection must be (hidden, dim) with bias of length dim")
        for name, arr in self.parameters().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name!r}")

    @property
    def hidden(self) -> int:
        return self.embedding.shape[1]

    @property
    def dim(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def init_random(
        cls, vocab_size=65536, hidden=128, dim=256, lowercase=True, seed=0, init_scale=0.05
    ):
        """Fresh model with parameters uniform in [-init_scale, init_scale]."""
        if init_scale <= 0:
            raise ValueError("init_scale must be positive")
        rng = np.random.default_rng(seed)
        return cls(
            Tokenizer(vocab_size=vocab_size, lowercase=lowercase),
            rng.uniform(-init_scale, init_scale, size=(vocab_size, hidden)),
            rng.uniform(-init_scale, init_scale, size=(hidden, dim)),
            rng.uniform(-init_scale, init_scale, size=dim),
        )

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "embedding": self.embedding,
            "projection": self.projection,
            "bias": self.bias,
        }

    # ---------------------------------------------------------------- forward

    def encode(self, text: str) -> EncodedText:
        ids = np.asarray(self.tokenizer.tokenize(text), dtype=np.int64)
        mean = self.embedding[ids].mean(axis=0)
        return EncodedText(vector=mean @ self.projection + self.bias, token_count=len(ids))

    def encode_token_batch(self, token_lists: list[np.ndarray]) -> BatchEncoding:
        means = np.stack([self.embedding[ids].mean(axis=0) for ids in token_lists])
        return BatchEncoding(
            vectors=means @ self.projection + self.bias,
            mean_embeddings=means,
            token_ids=token_lists,
        )

    def encode_batch(self, texts: list[str]) -> BatchEncoding:
        token_lists = [
            np.asarray(self.tokenizer.tokenize(t), dtype=np.int64) for t in texts
        ]
        return self.encode_token_batch(token_lists)

    # --------------------------------------------------------------- backward

    def encode_backward(self, text: str, upstream_grad: np.ndarray) -> TextGradients:
        """Parameter gradients of upstream_grad . encode(text)."""
        g = np.asarray(upstream_grad, dtype=np.float64)
        if g.shape != (self.dim,):
            raise ValueError(f"upstream_grad must have shape ({self.dim},)")
        ids = self.tokenizer.tokenize(text)
        mean = self.embedding[np.asarray(ids)].mean(axis=0)
        grad_mean = self.projection @ g
        per_token = grad_mean / len(ids)
        rows: dict[int, np.ndarray] = {}
        for tid in ids:  # repeated tokens accumulate
            if tid in rows:
                rows[tid] = rows[tid] + per_token
            else:
                rows[tid] = per_token.copy()
        return TextGradients(
            embedding_rows=rows,
            projection=np.outer(mean, g),
            bias=g.copy(),
        )

    def backward_token_batch(
        self, batch: BatchEncoding, grad_vectors: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Dense parameter gradients summed over a whole batch."""
        grad_vectors = np.asarray(grad_vectors, dtype=np.float64)
        grad_means = grad_vectors @ self.projection.T  # (n, h)
        grad_embedding = np.zeros_like(self.embedding)
        all_ids = np.concatenate(batch.token_ids)
        all_rows = np.concatenate(
            [
                np.repeat(grad_means[i : i + 1] / len(ids), len(ids), axis=0)
                for i, ids in enumerate(batch.token_ids)
            ]
        )
        np.add.at(grad_embedding, all_ids, all_rows)
        return {
            "embedding": grad_embedding,
            "projection": batch.mean_embeddings.T @ grad_vectors,
            "bias": grad_vectors.sum(axis=0),
        }

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        header = CHECKPOINT_MAGIC + struct.pack(
            "<IIIIB",
            CHECKPOINT_VERSION,
            self.tokenizer.vocab_size,
            self.hidden,
            self.dim,
            1 if self.tokenizer.lowercase else 0,
        )
        with open(path, "wb") as f:
            f.write(header)
            for arr in (self.embedding, self.projection, self.bias):
                f.write(arr.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "EncoderModel":
        with open(path, "rb") as f:
            read_magic(f, CHECKPOINT_MAGIC)
            read_version(f, CHECKPOINT_VERSION)
            vocab_size, hidden, dim, lowercase = struct.unpack(
                "<IIIB", read_exact(f, 13, "checkpoint header")
            )

            def tensor(shape, what):
                n = int(np.prod(shape))
                raw = read_exact(f, 4 * n, what)
                return np.frombuffer(raw, dtype="<f4").reshape(shape)

            embedding = tensor((vocab_size, hidden), "embedding table")
            projection = tensor((hidden, dim), "projection matrix")
            bias = tensor((dim,), "bias vector")
            if f.read(1):
                raise ContainerError("trailing bytes after checkpoint tensors")
        return cls(
            Tokenizer(vocab_size=vocab_size, lowercase=bool(lowercase)),
            embedding,
            projection,
            bias,
        )
