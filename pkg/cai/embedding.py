"""
Text Embeddings
Hashed bag-of-words baseline (FNV-1a 64-bit, 1024 buckets, L2-normalized) and a
remote backend speaking {"texts": [...]} -> {"vectors": [[...], ...]}.
"""

import logging
import re
import threading
from typing import Dict, List, Optional, Sequence

import numpy as np
import requests

from cai.errors import BackendError, ConfigError, ContractError

logger = logging.getLogger(__name__)

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_TOKEN_SPLIT = re.compile(r'[^0-9a-z]+')


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> List[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class BaselineEmbedder:
    name = 'baseline'

    def __init__(self, dimension: int = 1024):
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        return fnv1a_64(token.encode('utf-8')) % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            vector[self.bucket(token)] += 1.0
        norm = np.linalg.norm(vector)
        if norm > 0:
            vector /= norm
        return vector

    def embed_many(self, texts: Sequence[str]) -> List[np.ndarray]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    name = 'remote'

    def __init__(self, url: str, token: Optional[str] = None, dimension: int = 1024,
                 max_in_flight: int = 4, timeout: int = 60,
                 session: Optional[requests.Session] = None):
        if not url:
            raise ConfigError("CAI_EMBED_URL is not set for the remote embedding backend")
        self.url = url
        self.token = token
        self.dimension = dimension
        self.timeout = timeout
        self.session = session or requests.Session()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> List[np.ndarray]:
        headers = {'Content-Type': 'application/json'}
        if self.token:
            headers['Authorization'] = f'Bearer {self.token}'
        with self._in_flight:
            try:
                response = self.session.post(self.url, json={'texts': list(texts)},
                                             headers=headers, timeout=self.timeout)
            except requests.RequestException as e:
                raise BackendError(self.name, f"embedding request failed: {e}") from e
        if response.status_code != 200:
            raise BackendError(self.name, f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            vectors = [np.asarray(v, dtype=np.float64) for v in response.json()['vectors']]
        except (ValueError, KeyError, TypeError) as e:
            raise BackendError(self.name, f"malformed embedding response: {e}") from e
        if len(vectors) != len(texts):
            raise BackendError(self.name, f"expected {len(texts)} vectors, got {len(vectors)}")
        for v in vectors:
            if v.shape != (self.dimension,):
                raise BackendError(
                    self.name, f"vector dimension {v.shape} != configured {self.dimension}")
        return [_unit(v) for v in vectors]


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


class CachedEmbedder:
    """Memoizes another embedder; dedup embeds the same field texts many times."""

    def __init__(self, backend):
        self.backend = backend
        self.name = backend.name
        self.dimension = backend.dimension
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> List[np.ndarray]:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            vectors = self.backend.embed_many(missing)
            with self._lock:
                self._cache.update(zip(missing, vectors))
        with self._lock:
            return [self._cache[t] for t in texts]


def embed(text: str, backend) -> np.ndarray:
    return backend.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped to [-1, 1]; 0 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"cosine of vectors with shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
