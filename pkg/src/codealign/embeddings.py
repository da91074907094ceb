"""Embedding backends: a deterministic offline mock, an HTTP adapter, a disk cache.

Vectors feed the MHD metric, k-means clustering, and theme grouping. The mock
maps each input string to a seeded pseudo-random unit vector so that metric
and clustering behavior is exactly reproducible offline, across runs and
platforms.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ProviderUnavailable

CACHE_FORMAT = "codealign-embedding-cache"
CACHE_VERSION = 1


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Fixed-dimension real vector with its Euclidean norm cached."""

    values: np.ndarray
    norm: float

    @classmethod
    def of(cls, values: Sequence[float] | np.ndarray) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("zero embedding vectors are rejected")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(values=arr, norm=norm)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def unit(self) -> np.ndarray:
        return self.values / self.norm

    def __eq__(self, other) -> bool:
        return isinstance(other, EmbeddingVector) and np.array_equal(self.values, other.values)


def cosine_distance(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """1 - cos(u, v), clamped to [0, 2] against floating-point drift.

    Computed as half the squared distance between the unit vectors, which is
    algebraically the same but exactly 0.0 for identical inputs."""
    if u.dim != v.dim:
        raise DimensionMismatch(f"dimensions differ: {u.dim} vs {v.dim}")
    diff = u.values / u.norm - v.values / v.norm
    return min(2.0, 0.5 * float(np.dot(diff, diff)))


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        ...


def _check_inputs(texts: Sequence[str]) -> None:
    for t in texts:
        if not t:
            raise EmptyInput("cannot embed an empty string")


class MockEmbeddingProvider:
    """Deterministic offline embeddings: a seeded unit vector per input string.

    The seed is a stable SHA-256 hash of the input, so equal inputs map to
    equal vectors in every process on every platform.
    """

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_id = f"mock-{dim}"

    def _vector(self, text: str) -> EmbeddingVector:
        digest = hashlib.sha256(f"{self.provider_id}\x00{text}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        v = rng.standard_normal(self.dim)
        n = np.linalg.norm(v)
        if n == 0.0:  # vanishingly unlikely; nudge to a fixed axis
            v[0] = 1.0
            n = 1.0
        return EmbeddingVector.of(v / n)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_inputs(texts)
        return [self._vector(t) for t in texts]


def _retry(fn, retries: int = 5, backoff_base: float = 1.0, sleep=time.sleep):
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            return fn()
        except ProviderUnavailable:
            raise
        except Exception as exc:  # noqa: BLE001 -- network layer failures vary
            last = exc
            if attempt < retries:
                sleep(backoff_base * (2**attempt))
    raise ProviderUnavailable(f"backend failed after {retries} retries: {last}")


class HttpEmbeddingProvider:
    """Adapter for an HTTP endpoint taking a list of strings and returning
    a same-length list of float arrays (OpenAI-style /embeddings schema)."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "EMBEDDING_API_KEY",
        retries: int = 5,
        backoff_base: float = 1.0,
        timeout: float = 60.0,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.retries = retries
        self.backoff_base = backoff_base
        self.provider_id = f"{model}@{self.base_url}"
        self._client = httpx.Client(timeout=timeout)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_inputs(texts)

        def call():
            resp = self._client.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
                headers=self._headers(),
            )
            resp.raise_for_status()
            payload = resp.json()
            data = sorted(payload["data"], key=lambda d: d.get("index", 0))
            if len(data) != len(texts):
                raise ValueError(f"expected {len(texts)} embeddings, got {len(data)}")
            return [EmbeddingVector.of(d["embedding"]) for d in data]

        return _retry(call, self.retries, self.backoff_base)


def _cache_key(provider_id: str, text: str) -> str:
    return hashlib.sha256(f"{provider_id}\x00{text}".encode("utf-8")).hexdigest()


class CachedEmbeddingProvider:
    """Wraps a provider with an in-memory map and an optional append-only
    JSONL file keyed by (provider_id, exact input string).

    A cache hit returns the vector exactly as the backend produced it, so
    repeated metric computations over mostly-unchanged codes are free.
    """

    def __init__(self, provider: EmbeddingProvider, path: str | Path | None = None):
        self.provider = provider
        self.provider_id = provider.provider_id
        self.path = Path(path) if path is not None else None
        self._mem: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines:
            return
        header = json.loads(lines[0])
        if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
            raise ValueError(f"unrecognized cache header in {self.path}")
        for line in lines[1:]:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["provider"] != self.provider_id:
                continue
            self._mem[rec["key"]] = EmbeddingVector.of(rec["vector"])

    def _append(self, records: list[dict]) -> None:
        if self.path is None or not records:
            return
        new_file = not self.path.exists()
        with open(self.path, "a", encoding="utf-8") as fh:
            if new_file:
                fh.write(json.dumps({"format": CACHE_FORMAT, "version": CACHE_VERSION}) + "\n")
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_inputs(texts)
        with self._lock:
            keys = [_cache_key(self.provider_id, t) for t in texts]
            missing: dict[str, str] = {}
            for key, text in zip(keys, texts):
                if key not in self._mem and key not in missing:
                    missing[key] = text
            if missing:
                fetched = self.provider.embed(list(missing.values()))
                appended = []
                for (key, text), vec in zip(missing.items(), fetched):
                    self._mem[key] = vec
                    appended.append(
                        {
                            "key": key,
                            "provider": self.provider_id,
                            "text": text,
                            "vector": vec.values.tolist(),
                        }
                    )
                self._append(appended)
            return [self._mem[k] for k in keys]
