from __future__ import annotations

import json
import math
import random
from pathlib import Path

import pytest

from endcloud.kernels import (
    FNV64_OFFSET,
    FNV64_PRIME,
    KERNEL_BACKEND,
    cosine_counts,
    fnv1a64,
    ngram_bucket_counts,
)
from endcloud.kernels import _ngram_py as pure

compiled = pytest.importorskip("endcloud.kernels._ngram_cy")

DATA = Path(__file__).parent / "data"

ALPHABET = "abcdefg 0189你好吗棉质é́,.?"


def _fnv1a64_oracle(data: bytes) -> int:
    # independent walk of the published algorithm
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def test_fnv_published_vectors():
    assert FNV64_OFFSET == 0xCBF29CE484222325
    assert FNV64_PRIME == 0x100000001B3
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_fnv_matches_oracle_on_random_bytes():
    rng = random.Random(11)
    for _ in range(300):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 40)))
        assert fnv1a64(data) == _fnv1a64_oracle(data)
        assert pure.fnv1a64(data) == compiled.fnv1a64(data)


def test_backend_selected():
    assert KERNEL_BACKEND in ("python", "cython")
    assert pure.BACKEND == "python"
    assert compiled.BACKEND == "cython"


def test_bucket_counts_basics():
    assert ngram_bucket_counts("", 2, 65536) == {}
    assert ngram_bucket_counts("a", 2, 65536) == {}
    counts = ngram_bucket_counts("abab", 2, 65536)
    assert sorted(counts.values()) == [1, 2]
    with pytest.raises(ValueError):
        ngram_bucket_counts("ab", 0, 65536)
    with pytest.raises(ValueError):
        ngram_bucket_counts("ab", 2, 0)


def test_pure_and_compiled_identical():
    rng = random.Random(23)
    for _ in range(400):
        text = "".join(rng.choice(ALPHABET) for _ in range(rng.randrange(0, 40)))
        n = rng.randrange(1, 5)
        dims = rng.choice([7, 101, 65536])
        a = pure.ngram_bucket_counts(text, n, dims)
        b = compiled.ngram_bucket_counts(text, n, dims)
        assert a == b


def test_cosine_identical_across_backends():
    rng = random.Random(37)
    for _ in range(300):
        a = {rng.randrange(100): rng.randrange(1, 9) for _ in range(rng.randrange(0, 12))}
        b = {rng.randrange(100): rng.randrange(1, 9) for _ in range(rng.randrange(0, 12))}
        assert pure.cosine_counts(a, b) == compiled.cosine_counts(a, b)


def test_cosine_properties():
    rng = random.Random(5)
    for _ in range(200):
        a = {rng.randrange(50): rng.randrange(1, 9) for _ in range(rng.randrange(0, 10))}
        b = {rng.randrange(50): rng.randrange(1, 9) for _ in range(rng.randrange(0, 10))}
        value = cosine_counts(a, b)
        assert 0.0 <= value <= 1.0
        assert value == cosine_counts(b, a)
    assert cosine_counts({}, {1: 2}) == 0.0
    assert cosine_counts({}, {}) == 0.0
    assert cosine_counts({1: 2}, {3: 4}) == 0.0


def test_embedding_golden_file():
    lines = (DATA / "embedding_golden.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) >= 5
    for line in lines:
        record = json.loads(line)
        expected = {int(k): v for k, v in record["buckets"].items()}
        assert ngram_bucket_counts(record["text"], record["n"], record["dims"]) == expected


def test_known_bigram_cosine():
    a = ngram_bucket_counts("abab", 2, 65536)
    b = ngram_bucket_counts("ab", 2, 65536)
    assert abs(cosine_counts(a, b) - 2 / math.sqrt(5)) < 1e-12
