"""Pure-Python n-gram hashing kernel.

Reference semantics for the compiled twin in ``_ngram_cy.pyx``: both must
produce bit-identical results on every platform. The contract is:

- n-grams are sliding windows of ``n`` Unicode scalar values;
- each n-gram is hashed with FNV-1a 64-bit over its UTF-8 bytes;
- the bucket is the hash modulo ``dims``.
"""

from __future__ import annotations

import math

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

BACKEND = "python"


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def ngram_bucket_counts(text: str, n: int, dims: int) -> dict[int, int]:
    """Term frequencies of the character n-grams of ``text``, bucketed.

    Returns a sparse map bucket -> count. Text shorter than ``n`` yields an
    empty map.
    """
    if n < 1:
        raise ValueError(f"n-gram size must be >= 1, got {n}")
    if dims < 1:
        raise ValueError(f"bucket count must be >= 1, got {dims}")
    counts: dict[int, int] = {}
    for i in range(len(text) - n + 1):
        bucket = fnv1a64(text[i : i + n].encode("utf-8")) % dims
        counts[bucket] = counts.get(bucket, 0) + 1
    return counts


def cosine_counts(a: dict[int, int], b: dict[int, int]) -> float:
    """Cosine similarity of two sparse nonnegative count vectors.

    Either vector empty -> 0.0. Result clamped to [0, 1].
    """
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = 0
    for key, value in a.items():
        other = b.get(key)
        if other is not None:
            dot += value * other
    if dot == 0:
        return 0.0
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    cos = dot / (norm_a * norm_b)
    if cos < 0.0:
        return 0.0
    if cos > 1.0:
        return 1.0
    return cos
