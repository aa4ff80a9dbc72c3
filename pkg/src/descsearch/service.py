"""HTTP search service over a loaded dense index, BM25 index, and encoder.

The app is read-only: all state is loaded at startup and shared by
requests without mutation, so no locking is needed.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .bm25 import InvertedIndex, bm25_search, load_bm25
from .encoder import EncoderModel
from .index import VectorIndex

logger = logging.getLogger("descsearch.service")

MAX_K = 100


class ServiceStartupError(RuntimeError):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    dense_index: str
    bm25_index: str
    encoder: str
    host: str = "127.0.0.1"
    port: int = 8000
    default_k: int = 10
    cors_origins: tuple[str, ...] = ()

    def __post_init__(self):
        if self.default_k < 1 or self.default_k > MAX_K:
            raise ValueError(f"default_k must be in [1, {MAX_K}]")
        if self.port < 1 or self.port > 65535:
            raise ValueError("port out of range")


@dataclass
class SearchBackends:
    description_model: EncoderModel
    dense_index: VectorIndex
    bm25_index: InvertedIndex


def load_backends(config: ServiceConfig) -> SearchBackends:
    """Load all artifacts, failing hard on encoder/index dimension mismatch."""
    model = EncoderModel.load(config.encoder)
    index = VectorIndex.load(config.dense_index)
    bm25 = load_bm25(config.bm25_index)
    if model.dim != index.dim:
        raise ServiceStartupError(
            f"encoder dimension {model.dim} does not match index dimension {index.dim}"
        )
    return SearchBackends(model, index, bm25)


class SearchRequest(BaseModel):
    query: str
    k: int | None = None
    system: Literal["dense", "bm25", "both"] = "both"


def _run_system(backends: SearchBackends, system: str, query: str, k: int) -> list[dict]:
    if system == "dense":
        vec = backends.description_model.encode(query).vector
        result = backends.dense_index.search(vec, k)
    else:
        result = bm25_search(backends.bm25_index, query, k)
    return [
        {
            "system": system,
            "rank": rank,
            "id": hit.id,
            "text": hit.text,
            "score": hit.score,
        }
        for rank, hit in enumerate(result.entries, start=1)
    ]


def create_app(
    backends: SearchBackends,
    default_k: int = 10,
    cors_origins: tuple[str, ...] = (),
) -> FastAPI:
    app = FastAPI()
    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        # opaque on the wire; the traceback goes to the log only
        logger.exception("search request failed")
        return JSONResponse(status_code=500, content={"detail": "internal error"})

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.post("/search")
    async def search(request: SearchRequest):
        if not request.query.strip():
            return JSONResponse(status_code=400, content={"detail": "query must be non-empty"})
        k = default_k if request.k is None else request.k
        if k < 1:
            return JSONResponse(status_code=400, content={"detail": "k must be at least 1"})
        k = min(k, MAX_K)
        systems = ["dense", "bm25"] if request.system == "both" else [request.system]
        start = time.perf_counter()
        results = []
        for system in systems:
            results.extend(_run_system(backends, system, request.query, k))
        latency_ms = (time.perf_counter() - start) * 1000.0
        return {"results": results, "latency_ms": latency_ms}

    return app


def serve(config: ServiceConfig) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    backends = load_backends(config)
    app = create_app(backends, default_k=config.default_k, cors_origins=config.cors_origins)
    uvicorn.run(app, host=config.host, port=config.port)
