import subprocess
import sys
import textwrap

import numpy as np
import pytest

from codealign.embeddings import (
    CachedEmbeddingProvider,
    EmbeddingVector,
    MockEmbeddingProvider,
    cosine_distance,
    _retry,
)
from codealign.errors import DimensionMismatch, EmptyInput, ProviderUnavailable


class TestEmbeddingVector:
    def test_rejects_zero_vector(self):
        with pytest.raises(ValueError):
            EmbeddingVector.of([0.0, 0.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            EmbeddingVector.of([])

    def test_norm_cached(self):
        v = EmbeddingVector.of([3.0, 4.0])
        assert v.norm == 5.0
        assert v.dim == 2

    def test_values_read_only(self):
        v = EmbeddingVector.of([1.0, 2.0])
        with pytest.raises(ValueError):
            v.values[0] = 9.0


class TestCosineDistance:
    def test_self_distance_zero(self):
        v = EmbeddingVector.of([0.3, -0.2, 0.9])
        assert cosine_distance(v, v) == 0.0

    def test_antipodal_is_two(self):
        assert cosine_distance(EmbeddingVector.of([1, 0]), EmbeddingVector.of([-1, 0])) == 2.0

    def test_orthogonal_is_one(self):
        assert cosine_distance(EmbeddingVector.of([1, 0]), EmbeddingVector.of([0, 1])) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_distance(EmbeddingVector.of([1, 0]), EmbeddingVector.of([1, 0, 0]))

    def test_symmetry_and_scale_invariance(self, rng):
        for _ in range(50):
            u = EmbeddingVector.of(rng.standard_normal(8))
            v = EmbeddingVector.of(rng.standard_normal(8))
            alpha = float(rng.uniform(0.1, 10))
            assert cosine_distance(u, v) == pytest.approx(cosine_distance(v, u), abs=1e-15)
            assert cosine_distance(EmbeddingVector.of(alpha * u.values), v) == pytest.approx(
                cosine_distance(u, v), abs=1e-12
            )

    def test_range(self, rng):
        for _ in range(200):
            u = EmbeddingVector.of(rng.standard_normal(4))
            v = EmbeddingVector.of(rng.standard_normal(4))
            assert 0.0 <= cosine_distance(u, v) <= 2.0


class TestMockProvider:
    def test_deterministic_and_unit_norm(self):
        p = MockEmbeddingProvider()
        a, b = p.embed(["hello", "hello"])
        assert a == b
        assert a.norm == pytest.approx(1.0, abs=1e-12)
        assert a.dim == 64

    def test_different_inputs_differ(self):
        p = MockEmbeddingProvider()
        a, b = p.embed(["hello", "world"])
        assert a != b

    def test_empty_input_rejected(self):
        with pytest.raises(EmptyInput):
            MockEmbeddingProvider().embed([""])

    def test_stable_across_processes(self):
        script = textwrap.dedent(
            """
            from codealign.embeddings import MockEmbeddingProvider
            v = MockEmbeddingProvider().embed(["x"])[0]
            print(repr(v.values[:4].tolist()))
            """
        )
        outs = {
            subprocess.run(
                [sys.executable, "-c", script], capture_output=True, text=True, check=True
            ).stdout
            for _ in range(2)
        }
        assert len(outs) == 1
        local = repr(MockEmbeddingProvider().embed(["x"])[0].values[:4].tolist()) + "\n"
        assert outs == {local}


class FlakyProvider:
    """Fails a fixed number of times, then answers."""

    provider_id = "flaky"

    def __init__(self, failures: int):
        self.failures = failures
        self.calls = 0
        self.inner = MockEmbeddingProvider(dim=4)

    def embed(self, texts):
        self.calls += 1
        if self.calls <= self.failures:
            raise ConnectionError("boom")
        return self.inner.embed(texts)


class TestRetry:
    def test_retry_then_success(self):
        sleeps = []
        result = _retry(lambda: 42, retries=3, sleep=sleeps.append)
        assert result == 42

    def test_backoff_is_exponential(self):
        sleeps = []
        attempts = {"n": 0}

        def flaky():
            attempts["n"] += 1
            if attempts["n"] <= 3:
                raise ConnectionError("x")
            return "ok"

        assert _retry(flaky, retries=5, backoff_base=1.0, sleep=sleeps.append) == "ok"
        assert sleeps == [1.0, 2.0, 4.0]

    def test_exhausted_raises_provider_unavailable(self):
        def always():
            raise ConnectionError("x")

        with pytest.raises(ProviderUnavailable):
            _retry(always, retries=2, sleep=lambda s: None)


class TestCache:
    def test_memory_cache_dedupes_backend_calls(self):
        backend = FlakyProvider(failures=0)
        cached = CachedEmbeddingProvider(backend)
        first = cached.embed(["a", "b", "a"])
        assert first[0] == first[2]
        calls = backend.calls
        again = cached.embed(["a", "b"])
        assert backend.calls == calls  # all hits
        assert again[0] == first[0]

    def test_disk_cache_survives_restart(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        p1 = CachedEmbeddingProvider(MockEmbeddingProvider(), path)
        v1 = p1.embed(["alpha"])[0]
        backend = FlakyProvider(failures=99)  # would fail if actually called
        backend.provider_id = "mock-64"
        p2 = CachedEmbeddingProvider(backend, path)
        v2 = p2.embed(["alpha"])[0]
        assert v1 == v2
        assert backend.calls == 0

    def test_cache_file_has_version_header(self, tmp_path):
        import json

        path = tmp_path / "cache.jsonl"
        CachedEmbeddingProvider(MockEmbeddingProvider(), path).embed(["alpha"])
        header = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
        assert header == {"format": "codealign-embedding-cache", "version": 1}

    def test_vector_identical_to_original_response(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        provider = MockEmbeddingProvider()
        cached = CachedEmbeddingProvider(provider, path)
        original = provider.embed(["gamma"])[0]
        assert cached.embed(["gamma"])[0] == original
        reloaded = CachedEmbeddingProvider(MockEmbeddingProvider(), path)
        assert reloaded.embed(["gamma"])[0] == original
        assert np.array_equal(reloaded.embed(["gamma"])[0].values, original.values)
