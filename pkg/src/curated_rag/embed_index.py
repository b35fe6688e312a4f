"""Text embedding plus exact dot-product retrieval over the curated corpus.

The corpus is small (hundreds of documents), so search is a full scan: every
query is scored against every row and sorted. No approximate structure is ever
involved, which keeps results bit-reproducible.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import Corpus, corpus_digest
from .utils import TransportError, atomic_write_bytes, atomic_write_text, retry_transport

DEFAULT_INPUT_TRUNCATION_CHARS = 2000


class EmbeddingError(Exception):
    pass


class DimensionMismatchError(EmbeddingError):
    """A vector's length disagrees with the descriptor or index dimension."""


class EmptyIndexError(EmbeddingError):
    pass


class IndexBuildError(EmbeddingError):
    pass


@dataclass(frozen=True)
class EmbedderDescriptor:
    provider: str  # "remote" | "mock"
    model_id: str
    dim: int
    normalize: bool = False
    input_truncation_chars: int = DEFAULT_INPUT_TRUNCATION_CHARS

    def __post_init__(self):
        if self.provider not in ("remote", "mock"):
            raise EmbeddingError(f"unknown embedder provider {self.provider!r}")
        if self.dim <= 0:
            raise EmbeddingError("dim must be positive")
        if self.input_truncation_chars <= 0:
            raise EmbeddingError("input_truncation_chars must be positive")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "model_id": self.model_id,
            "dim": self.dim,
            "normalize": self.normalize,
            "input_truncation_chars": self.input_truncation_chars,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderDescriptor":
        return cls(**d)


class Embedder(Protocol):
    descriptor: EmbedderDescriptor

    def embed(self, text: str) -> np.ndarray: ...


_MOCK_MODEL_RE = re.compile(r"^mock-ngram(?P<n>\d+)-s(?P<seed>-?\d+)$")


class MockEmbedder:
    """Deterministic offline embedder.

    Hashes character n-grams of the input into dim buckets with a keyed hash
    (stable across processes and platforms), giving nonzero, text-sensitive
    similarity structure without any model.
    """

    def __init__(
        self,
        dim: int = 64,
        seed: int = 0,
        normalize: bool = False,
        input_truncation_chars: int = DEFAULT_INPUT_TRUNCATION_CHARS,
        ngram: int = 3,
    ):
        self.seed = seed
        self.ngram = ngram
        self._key = seed.to_bytes(8, "little", signed=True)
        self.descriptor = EmbedderDescriptor(
            provider="mock",
            model_id=f"mock-ngram{ngram}-s{seed}",
            dim=dim,
            normalize=normalize,
            input_truncation_chars=input_truncation_chars,
        )

    def _bucket(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        value = int.from_bytes(digest, "little")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.descriptor.dim, sign

    def embed(self, text: str) -> np.ndarray:
        dim = self.descriptor.dim
        vec = np.zeros(dim, dtype=np.float64)
        n = self.ngram
        grams = [text[i : i + n] for i in range(max(1, len(text) - n + 1))]
        for gram in grams:
            bucket, sign = self._bucket(gram)
            vec[bucket] += sign
        if not vec.any():
            # Signed buckets can cancel; fall back to a whole-text bucket.
            bucket, _ = self._bucket("\x00" + text)
            vec[bucket] = 1.0
        if self.descriptor.normalize:
            vec = vec / np.linalg.norm(vec)
        return vec


class RemoteEmbedder:
    """HTTP adapter: POST the text, receive an array of reals back.

    Accepts a bare array, ``{"embedding": [...]}``, or an OpenAI-style
    ``{"data": [{"embedding": [...]}]}`` response body.
    """

    def __init__(
        self,
        descriptor: EmbedderDescriptor,
        endpoint: str,
        api_key: str | None = None,
        session=None,
        rate_limiter=None,
        timeout: float = 30.0,
    ):
        if descriptor.provider != "remote":
            raise EmbeddingError("RemoteEmbedder requires a remote descriptor")
        import requests

        self.descriptor = descriptor
        self.endpoint = endpoint
        self.api_key = api_key
        self.session = session or requests.Session()
        self.rate_limiter = rate_limiter
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        import requests

        if self.rate_limiter is not None:
            self.rate_limiter.acquire()

        def attempt():
            headers = {"Content-Type": "application/json"}
            if self.api_key:
                headers["Authorization"] = f"Bearer {self.api_key}"
            try:
                resp = self.session.post(
                    self.endpoint,
                    json={"model": self.descriptor.model_id, "input": text},
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                raise TransportError(f"embedder: {exc}") from exc
            if resp.status_code >= 500:
                raise TransportError(f"embedder: HTTP status {resp.status_code}")
            if not 200 <= resp.status_code < 300:
                raise EmbeddingError(f"embedder: HTTP status {resp.status_code}")
            return resp.json()

        payload = retry_transport(attempt)
        if isinstance(payload, list):
            values = payload
        elif "embedding" in payload:
            values = payload["embedding"]
        elif "data" in payload:
            values = payload["data"][0]["embedding"]
        else:
            raise EmbeddingError(f"unrecognized embedder response shape: {sorted(payload)}")
        return np.asarray(values, dtype=np.float64)


def embedder_from_descriptor(descriptor: EmbedderDescriptor, endpoint: str | None = None, api_key: str | None = None) -> Embedder:
    """Reconstruct a usable embedder from a persisted descriptor."""
    if descriptor.provider == "mock":
        m = _MOCK_MODEL_RE.match(descriptor.model_id)
        if not m:
            raise EmbeddingError(f"cannot rebuild mock embedder from model_id {descriptor.model_id!r}")
        return MockEmbedder(
            dim=descriptor.dim,
            seed=int(m.group("seed")),
            normalize=descriptor.normalize,
            input_truncation_chars=descriptor.input_truncation_chars,
            ngram=int(m.group("n")),
        )
    if not endpoint:
        raise EmbeddingError("remote embedder needs an endpoint")
    return RemoteEmbedder(descriptor, endpoint=endpoint, api_key=api_key)


def embed_text(text: str, embedder: Embedder) -> np.ndarray:
    """Embed one text under the embedder's descriptor contract.

    The input is truncated to the descriptor's character limit first. The
    result always has the descriptor's dimension and, in normalize mode, unit
    L2 norm within 1e-6.
    """
    if not text.strip():
        raise EmbeddingError("cannot embed empty text")
    desc = embedder.descriptor
    vec = np.asarray(embedder.embed(text[: desc.input_truncation_chars]), dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != desc.dim:
        raise DimensionMismatchError(
            f"embedder returned dim {vec.shape[-1] if vec.ndim else 0}, descriptor says {desc.dim}"
        )
    if not np.isfinite(vec).all():
        raise EmbeddingError("embedding contains non-finite values")
    if desc.normalize:
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise EmbeddingError("cannot normalize a zero vector")
        vec = vec / norm
    return vec


def dot(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Plain inner product, accumulated in double precision."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionMismatchError(f"dot of shapes {av.shape} and {bv.shape}")
    return float(np.dot(av, bv))


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    rank: int  # 1-based


@dataclass(frozen=True)
class EmbeddingIndex:
    """Immutable document-vector matrix aligned with doc_ids row for row."""

    doc_ids: tuple[str, ...]
    vectors: np.ndarray  # (num_docs, dim) float32
    embedder: EmbedderDescriptor
    corpus_hash: str

    def __post_init__(self):
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise IndexBuildError("doc_ids must be unique")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.doc_ids):
            raise IndexBuildError(
                f"vector matrix shape {self.vectors.shape} does not align with {len(self.doc_ids)} doc_ids"
            )
        if self.vectors.shape[0] and self.vectors.shape[1] != self.embedder.dim:
            raise DimensionMismatchError(
                f"matrix dim {self.vectors.shape[1]} != descriptor dim {self.embedder.dim}"
            )
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def __len__(self) -> int:
        return len(self.doc_ids)


def build_index(corpus: Corpus, embedder: Embedder) -> EmbeddingIndex:
    """Embed every corpus document into one index row (corpus order is kept)."""
    if len(corpus) == 0:
        raise IndexBuildError("corpus is empty")
    rows = []
    for doc in corpus:
        try:
            rows.append(embed_text(doc.body, embedder))
        except Exception as exc:
            raise IndexBuildError(f"embedding failed for document {doc.doc_id}: {exc}") from exc
    matrix = np.asarray(rows, dtype=np.float32)
    return EmbeddingIndex(
        doc_ids=tuple(d.doc_id for d in corpus),
        vectors=matrix,
        embedder=embedder.descriptor,
        corpus_hash=corpus_digest(corpus),
    )


def search(index: EmbeddingIndex, query: Sequence[float] | np.ndarray, k: int) -> list[SearchHit]:
    """Exact top-k by dot product: score every row, sort, return the best k.

    Ordering is descending score with ties broken by ascending doc_id, so
    results are deterministic for any input.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise EmptyIndexError("cannot search an empty index")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise DimensionMismatchError(f"query dim {q.shape} != index dim {index.dim}")
    scores = index.vectors.astype(np.float64) @ q
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.doc_ids[i]))
    return [
        SearchHit(doc_id=index.doc_ids[i], score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order[: min(k, len(index))], start=1)
    ]


def save_index(index: EmbeddingIndex, base: str | Path) -> tuple[Path, Path]:
    """Persist as `<base>.vec` (raw little-endian float32, row-major) + `<base>.json`."""
    base = Path(base)
    vec_path = base.with_name(base.name + ".vec")
    json_path = base.with_name(base.name + ".json")
    matrix = np.ascontiguousarray(index.vectors, dtype="<f4")
    atomic_write_bytes(vec_path, matrix.tobytes(order="C"))
    header = {
        "doc_ids": list(index.doc_ids),
        "embedder": index.embedder.to_dict(),
        "corpus_hash": index.corpus_hash,
        "shape": list(index.vectors.shape),
        "dtype": "<f4",
    }
    atomic_write_text(json_path, json.dumps(header, ensure_ascii=False, indent=2) + "\n")
    return vec_path, json_path


def load_index(base: str | Path) -> EmbeddingIndex:
    base = Path(base)
    header = json.loads(base.with_name(base.name + ".json").read_text("utf-8"))
    shape = tuple(header["shape"])
    raw = base.with_name(base.name + ".vec").read_bytes()
    matrix = np.frombuffer(raw, dtype=header["dtype"]).reshape(shape).copy()
    return EmbeddingIndex(
        doc_ids=tuple(header["doc_ids"]),
        vectors=matrix,
        embedder=EmbedderDescriptor.from_dict(header["embedder"]),
        corpus_hash=header["corpus_hash"],
    )
