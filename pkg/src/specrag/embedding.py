"""Embedding providers and a flat cosine-similarity vector index with binary persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from .corpus import Chunk

logger = logging.getLogger(__name__)

INDEX_MAGIC = b"SSVIDX1"
INDEX_FORMAT_VERSION = 1
METADATA_SUFFIX = ".meta.jsonl"


class EmbeddingError(Exception):
    """Base class for embedding and index failures."""


class ProviderError(EmbeddingError):
    """A remote provider call failed after the configured retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (attempts={attempts})")
        self.attempts = attempts


class DimensionMismatchError(EmbeddingError):
    """A vector did not match the index dimension."""


class DuplicateIdError(EmbeddingError):
    """An id being added is already present in the index."""


class IndexFormatError(EmbeddingError):
    """A persisted index file is corrupt or from an unknown format."""


def normalize(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize rows to float32; all-zero rows stay zero."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    norms = np.linalg.norm(arr, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    return (arr / safe[:, None]).astype(np.float32)


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return one vector per text, shape (len(texts), dimension)."""
        ...


class MockEmbeddingProvider:
    """Deterministic hashed bag-of-words embedder for offline operation.

    Lowercases, splits on whitespace, hashes each token into one of
    ``dimension`` buckets with a seeded 64-bit blake2b, counts, and
    L2-normalizes. Texts sharing words get positive cosine similarity.
    """

    def __init__(self, dimension: int = 64, seed: int = 0):
        self.name = f"mock-bow-{dimension}"
        self.dimension = dimension
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=False)

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        counts = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in text.lower().split():
                counts[row, self._bucket(token)] += 1.0
        return normalize(counts) if len(texts) else counts.astype(np.float32)


class RemoteEmbeddingProvider:
    """Client for an OpenAI-compatible embeddings endpoint (POST /v1/embeddings)."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        dimension: int,
        auth_env_var: str | None = None,
        batch_size: int = 64,
        max_retries: int = 2,
        max_concurrency: int = 4,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.name = model_id
        self.dimension = dimension
        self.model_id = model_id
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.max_concurrency = max_concurrency
        headers = {}
        if auth_env_var:
            token = os.environ.get(auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout
        )

    def _embed_batch(self, batch: Sequence[str]) -> np.ndarray:
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            try:
                resp = self._client.post(
                    "/v1/embeddings", json={"model": self.model_id, "input": list(batch)}
                )
                resp.raise_for_status()
                data = sorted(resp.json()["data"], key=lambda item: item["index"])
                vectors = np.asarray([item["embedding"] for item in data], dtype=np.float64)
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = exc
                logger.warning("embedding call failed (attempt %d): %s", attempts, exc)
                continue
            if vectors.shape != (len(batch), self.dimension):
                raise DimensionMismatchError(
                    f"provider returned shape {vectors.shape}, expected ({len(batch)}, {self.dimension})"
                )
            return normalize(vectors)
        raise ProviderError(f"embedding endpoint failed: {last_error}", attempts=attempts)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if len(batches) > 1 and self.max_concurrency > 1:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                parts = list(pool.map(self._embed_batch, batches))
        else:
            parts = [self._embed_batch(b) for b in batches]
        return np.vstack(parts)


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """Embed texts through a provider, guaranteeing unit-normalized float32 rows."""
    if not texts:
        return np.zeros((0, provider.dimension), dtype=np.float32)
    vectors = provider.embed(texts)
    vectors = np.asarray(vectors)
    if vectors.shape != (len(texts), provider.dimension):
        raise DimensionMismatchError(
            f"provider {provider.name} returned shape {vectors.shape}, "
            f"expected ({len(texts)}, {provider.dimension})"
        )
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingError(f"provider {provider.name} returned non-finite components")
    return normalize(vectors)


class VectorIndex:
    """Flat exhaustive cosine index over unit vectors keyed by chunk id.

    Concurrency contract: many readers or one writer. Writers build new
    arrays and swap references atomically, so readers always see a
    consistent snapshot.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._ids: tuple[str, ...] = ()
        self._matrix32 = np.zeros((0, dimension), dtype=np.float32)
        self._matrix64 = np.zeros((0, dimension), dtype=np.float64)
        self._metadata: dict[str, Chunk] = {}
        self._write_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def vector_for(self, chunk_id: str) -> np.ndarray:
        return self._matrix32[self._ids.index(chunk_id)].copy()

    def resolve_chunk(self, chunk_id: str) -> Chunk:
        return self._metadata[chunk_id]

    def has_chunk(self, chunk_id: str) -> bool:
        return chunk_id in self._metadata

    def add(
        self,
        pairs: Sequence[tuple[str, np.ndarray]],
        chunks: Iterable[Chunk] | None = None,
    ) -> None:
        """Add (chunk_id, vector) pairs; all validation happens before mutation.

        ``chunks`` supplies metadata for the new ids so search hits stay
        resolvable to their source text.
        """
        with self._write_lock:
            new_ids = [cid for cid, _ in pairs]
            seen = set(self._ids)
            for cid in new_ids:
                if cid in seen:
                    raise DuplicateIdError(f"id already indexed: {cid!r}")
                seen.add(cid)
            rows = []
            for cid, vector in pairs:
                arr = np.asarray(vector, dtype=np.float64).ravel()
                if arr.shape[0] != self.dimension:
                    raise DimensionMismatchError(
                        f"vector for {cid!r} has dimension {arr.shape[0]}, index needs {self.dimension}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise EmbeddingError(f"vector for {cid!r} has non-finite components")
                rows.append(arr)
            metadata = dict(self._metadata)
            if chunks is not None:
                for chunk in chunks:
                    metadata[chunk.chunk_id] = chunk
            if rows:
                added32 = normalize(np.vstack(rows))
                matrix32 = np.vstack([self._matrix32, added32])
            else:
                matrix32 = self._matrix32
            # Swap all snapshot fields only after every row validated.
            self._ids = tuple(self._ids) + tuple(new_ids)
            self._matrix32 = matrix32
            self._matrix64 = matrix32.astype(np.float64)
            self._metadata = metadata

    def search(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Top-k by cosine similarity, descending, ties broken by ascending id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        ids, matrix = self._ids, self._matrix64  # consistent snapshot
        if not ids:
            return []
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape[0] != self.dimension:
            raise DimensionMismatchError(
                f"query has dimension {q.shape[0]}, index needs {self.dimension}"
            )
        scores = matrix @ q
        order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
        return [(ids[i], float(scores[i])) for i in order[: min(k, len(ids))]]

    def save(self, path: Path | str) -> None:
        """Write the binary index plus a JSON-lines chunk-metadata sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<IIQ", INDEX_FORMAT_VERSION, self.dimension, len(self._ids)))
            for row, cid in enumerate(self._ids):
                id_bytes = cid.encode("utf-8")
                fh.write(struct.pack("<H", len(id_bytes)))
                fh.write(id_bytes)
                fh.write(self._matrix32[row].tobytes())
        with open(str(path) + METADATA_SUFFIX, "w", encoding="utf-8") as fh:
            for cid in sorted(self._metadata):
                fh.write(json.dumps(self._metadata[cid].to_dict(), sort_keys=True))
                fh.write("\n")

    @classmethod
    def load(cls, path: Path | str) -> "VectorIndex":
        path = Path(path)
        raw = path.read_bytes()
        header_len = len(INDEX_MAGIC) + struct.calcsize("<IIQ")
        if len(raw) < header_len:
            raise IndexFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        if raw[: len(INDEX_MAGIC)] != INDEX_MAGIC:
            raise IndexFormatError(
                f"{path}: bad magic {raw[:len(INDEX_MAGIC)]!r}, expected {INDEX_MAGIC!r}"
            )
        version, dimension, count = struct.unpack_from("<IIQ", raw, len(INDEX_MAGIC))
        if version != INDEX_FORMAT_VERSION:
            raise IndexFormatError(
                f"{path}: format version {version}, reader supports {INDEX_FORMAT_VERSION}"
            )
        index = cls(dimension)
        offset = header_len
        ids: list[str] = []
        rows: list[np.ndarray] = []
        vector_bytes = dimension * 4
        for record in range(count):
            if offset + 2 > len(raw):
                raise IndexFormatError(f"{path}: truncated at record {record} (id length)")
            (id_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            if offset + id_len + vector_bytes > len(raw):
                raise IndexFormatError(f"{path}: truncated at record {record} (payload)")
            ids.append(raw[offset : offset + id_len].decode("utf-8"))
            offset += id_len
            rows.append(np.frombuffer(raw, dtype="<f4", count=dimension, offset=offset).copy())
            offset += vector_bytes
        if offset != len(raw):
            raise IndexFormatError(f"{path}: {len(raw) - offset} trailing bytes after records")
        index._ids = tuple(ids)
        index._matrix32 = (
            np.vstack(rows) if rows else np.zeros((0, dimension), dtype=np.float32)
        )
        index._matrix64 = index._matrix32.astype(np.float64)
        meta_path = Path(str(path) + METADATA_SUFFIX)
        if meta_path.exists():
            with open(meta_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        chunk = Chunk.from_dict(json.loads(line))
                        index._metadata[chunk.chunk_id] = chunk
        return index


def build_index(chunks: Sequence[Chunk], provider: EmbeddingProvider) -> VectorIndex:
    """Embed chunk texts and assemble a fresh index with full metadata."""
    index = VectorIndex(provider.dimension)
    if not chunks:
        return index
    vectors = embed_texts(provider, [c.text for c in chunks])
    index.add([(c.chunk_id, vectors[i]) for i, c in enumerate(chunks)], chunks=chunks)
    return index
