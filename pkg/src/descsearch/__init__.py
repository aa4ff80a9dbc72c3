"""descsearch: retrieve sentences that instantiate abstract descriptions.

Train a dual text encoder on <description, sentence> data with a combined
triplet + InfoNCE objective, index sentence vectors for exact cosine
search, and compare against a BM25 keyword baseline.
"""

__version__ = "0.1.0"

from .dataset import DatasetSplit, TrainingInstance, load_split, save_split, shuffle_epoch
from .encoder import EncoderModel, Tokenizer
from .index import RetrievalResult, VectorIndex, encode_corpus
from .bm25 import InvertedIndex, build_bm25, bm25_search
from .training import TrainingConfig, train, triplet_loss, info_nce_loss
from .evaluation import (
    EvalReport,
    compare,
    evaluate,
    make_bm25_retriever,
    make_dense_retriever,
)
from .synthetic import SyntheticConfig, make_eval_fixture, make_training_split

# The service and cli modules are importable as descsearch.service and
# descsearch.cli; they stay out of the package root so that importing
# descsearch never pulls in fastapi or click.

__all__ = [
    "DatasetSplit",
    "TrainingInstance",
    "load_split",
    "save_split",
    "shuffle_epoch",
    "EncoderModel",
    "Tokenizer",
    "VectorIndex",
    "RetrievalResult",
    "encode_corpus",
    "InvertedIndex",
    "build_bm25",
    "bm25_search",
    "TrainingConfig",
    "train",
    "triplet_loss",
    "info_nce_loss",
    "EvalReport",
    "compare",
    "evaluate",
    "make_bm25_retriever",
    "make_dense_retriever",
    "SyntheticConfig",
    "make_eval_fixture",
    "make_training_split",
]
