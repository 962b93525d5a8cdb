"""Sentence embeddings: backends, a content-addressed disk cache, and batching.

Every vector leaving this module is unit-L2-normalized and rounded to
float32, so a cache hit is indistinguishable from a fresh computation.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendError, ConfigError
from .text import tokenize

logger = logging.getLogger(__name__)

DEFAULT_MODEL_ID = "all-MiniLM-L6-v2"
DEFAULT_DIMENSION = 384


class EmbeddingBackend(Protocol):
    model_id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _word_vector(word: str, dimension: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x00{word}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dimension)
    return v / np.linalg.norm(v)


def stub_embed(text: str, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-words embedding: sum of seeded random word vectors.

    Text without tokens maps to the first basis vector.
    """
    if dimension < 8:
        raise ValueError("stub embeddings need dimension >= 8")
    total = np.zeros(dimension)
    for word in tokenize(text):
        total += _word_vector(word, dimension, seed)
    norm = np.linalg.norm(total)
    if norm == 0.0:
        total = np.zeros(dimension)
        total[0] = 1.0
        return total
    return total / norm


class StubEmbeddingBackend:
    """Offline backend built on :func:`stub_embed`."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        if dimension < 8:
            raise ConfigError("stub embeddings need dimension >= 8")
        self.dimension = dimension
        self.seed = seed
        self.model_id = f"stub-d{dimension}-s{seed}"
        self.calls = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        return np.stack([stub_embed(t, self.dimension, self.seed) for t in texts])


class HttpEmbeddingBackend:
    """Client for a sentence-embedding service.

    POSTs ``{"texts": [...]}`` and expects ``{"vectors": [[...], ...]}``.
    """

    def __init__(self, endpoint: str, model_id: str = DEFAULT_MODEL_ID,
                 dimension: int = DEFAULT_DIMENSION, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model_id = model_id
        self.dimension = dimension
        self.timeout = timeout
        self.session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = self.session.post(self.endpoint, json={"texts": list(texts)}, timeout=self.timeout)
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (requests.RequestException, ValueError, KeyError) as e:
            raise BackendError(f"embedding backend {self.endpoint} failed: {e}") from e
        arr = np.asarray(vectors, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != len(texts):
            raise BackendError(f"embedding backend returned shape {arr.shape} for {len(texts)} texts")
        return arr


@dataclass
class EmbeddingBackendConfig:
    kind: str = "stub"
    model_id: str = DEFAULT_MODEL_ID
    dimension: int = DEFAULT_DIMENSION
    seed: int = 0
    endpoint: str | None = None
    cache_path: str | None = None
    timeout: float = 60.0

    def build(self) -> EmbeddingBackend:
        if self.dimension <= 0:
            raise ConfigError("embedding dimension must be positive")
        if self.kind == "stub":
            return StubEmbeddingBackend(self.dimension, self.seed)
        if self.kind == "external-model":
            if not self.endpoint:
                raise ConfigError("external-model embedding backend needs an endpoint")
            return HttpEmbeddingBackend(self.endpoint, self.model_id, self.dimension, self.timeout)
        raise ConfigError(f"unknown embedding backend kind {self.kind!r}")


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Directory cache of vectors for one model, keyed by SHA-256 of the text.

    Layout: ``manifest.json`` with model id and dimension, plus shard files
    ``<xx>.bin`` (first two hex digits of the key) holding records of a
    32-byte raw digest followed by `dimension` little-endian float32 values.
    """

    _DTYPE = np.dtype("<f4")

    def __init__(self, path: str | Path, model_id: str, dimension: int):
        self.path = Path(path)
        self.model_id = model_id
        self.dimension = dimension
        self._lock = threading.Lock()
        self._vectors: dict[str, np.ndarray] = {}
        self.path.mkdir(parents=True, exist_ok=True)
        manifest = self.path / "manifest.json"
        if manifest.exists():
            meta = json.loads(manifest.read_text(encoding="utf-8"))
            if meta.get("model_id") != model_id or meta.get("dimension") != dimension:
                raise ConfigError(
                    f"cache {self.path} holds {meta.get('model_id')}/{meta.get('dimension')}, "
                    f"not {model_id}/{dimension}"
                )
            self._load()
        else:
            manifest.write_text(json.dumps({"model_id": model_id, "dimension": dimension}, indent=2) + "\n",
                                encoding="utf-8")

    @property
    def _record_size(self) -> int:
        return 32 + 4 * self.dimension

    def _load(self) -> None:
        for shard in sorted(self.path.glob("*.bin")):
            raw = shard.read_bytes()
            usable = len(raw) - len(raw) % self._record_size
            for off in range(0, usable, self._record_size):
                key = raw[off:off + 32].hex()
                vec = np.frombuffer(raw, dtype=self._DTYPE, count=self.dimension, offset=off + 32)
                self._vectors[key] = vec.copy()

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def get(self, key: str) -> np.ndarray | None:
        return self._vectors.get(key)

    def put_many(self, items: dict[str, np.ndarray]) -> None:
        with self._lock:
            by_shard: dict[str, list[bytes]] = {}
            for key, vec in items.items():
                if key in self._vectors:
                    continue
                vec = np.asarray(vec, dtype=self._DTYPE)
                if vec.shape != (self.dimension,):
                    raise ValueError(f"vector of shape {vec.shape} for a {self.dimension}-d cache")
                self._vectors[key] = vec.copy()
                by_shard.setdefault(key[:2], []).append(bytes.fromhex(key) + vec.tobytes())
            for shard, records in by_shard.items():
                with open(self.path / f"{shard}.bin", "ab") as fh:
                    fh.write(b"".join(records))


def normalize_rows(arr: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise BackendError("embedding backend returned a zero or non-finite vector")
    return (arr / norms).astype(np.float32)


def embed_batch(texts: Sequence[str], backend: EmbeddingBackend,
                cache: EmbeddingCache | None = None) -> np.ndarray:
    """Embed `texts` in order, computing each distinct uncached text once.

    Returns an ``(n, dimension)`` float64 array of unit vectors.
    """
    if cache is not None and cache.model_id != backend.model_id:
        raise ConfigError(f"cache model {cache.model_id} does not match backend {backend.model_id}")
    keys = [text_digest(t) for t in texts]
    found: dict[str, np.ndarray] = {}
    if cache is not None:
        for k in keys:
            v = cache.get(k)
            if v is not None:
                found[k] = v
    missing: dict[str, str] = {}
    for k, t in zip(keys, texts):
        if k not in found:
            missing.setdefault(k, t)
    if missing:
        raw = np.asarray(backend.embed(list(missing.values())), dtype=float)
        if raw.ndim != 2 or raw.shape[1] != backend.dimension:
            raise BackendError(f"backend {backend.model_id} returned dimension {raw.shape[-1]}, "
                               f"configured {backend.dimension}")
        fresh = dict(zip(missing, normalize_rows(raw)))
        if cache is not None:
            cache.put_many(fresh)
        found.update(fresh)
        logger.debug("embedded %d texts (%d cached)", len(missing), len(set(keys)) - len(missing))
    if not texts:
        return np.zeros((0, backend.dimension))
    return np.stack([found[k] for k in keys]).astype(np.float64)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
