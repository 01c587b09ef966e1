# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled n-gram hashing kernel.

Must stay bit-identical to the pure-Python twin in ``_ngram_py``:
sliding windows of n Unicode scalar values, FNV-1a 64-bit over the
window's UTF-8 bytes, bucket = hash % dims.
"""

from libc.math cimport sqrt
from libc.stdint cimport uint64_t

from cpython.mem cimport PyMem_Free, PyMem_Malloc

cdef uint64_t FNV64_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV64_PRIME = 0x100000001B3ULL

BACKEND = "cython"


cdef inline uint64_t _fnv1a64_range(const unsigned char *buf,
                                    Py_ssize_t start,
                                    Py_ssize_t stop) nogil:
    cdef uint64_t h = FNV64_OFFSET
    cdef Py_ssize_t i
    for i in range(start, stop):
        h ^= buf[i]
        h *= FNV64_PRIME
    return h


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    cdef const unsigned char *buf = data
    return _fnv1a64_range(buf, 0, len(data))


def ngram_bucket_counts(text: str, n: int, dims: int):
    """Term frequencies of the character n-grams of ``text``, bucketed."""
    if n < 1:
        raise ValueError(f"n-gram size must be >= 1, got {n}")
    if dims < 1:
        raise ValueError(f"bucket count must be >= 1, got {dims}")

    cdef Py_ssize_t m = len(text)
    cdef dict counts = {}
    if m < n:
        return counts

    cdef bytes encoded = text.encode("utf-8")
    cdef const unsigned char *buf = encoded

    # Byte offset of each scalar value inside the UTF-8 encoding, plus the
    # end sentinel, so window i covers bytes [offsets[i], offsets[i + n]).
    cdef Py_ssize_t *offsets = <Py_ssize_t *> PyMem_Malloc((m + 1) * sizeof(Py_ssize_t))
    if offsets == NULL:
        raise MemoryError()

    cdef Py_ssize_t i, pos = 0
    cdef Py_UCS4 ch
    cdef uint64_t h
    cdef object bucket, prev
    try:
        for i in range(m):
            offsets[i] = pos
            ch = text[i]
            if ch < 0x80:
                pos += 1
            elif ch < 0x800:
                pos += 2
            elif ch < 0x10000:
                pos += 3
            else:
                pos += 4
        offsets[m] = pos

        for i in range(m - n + 1):
            h = _fnv1a64_range(buf, offsets[i], offsets[i + n])
            bucket = h % <uint64_t> dims
            prev = counts.get(bucket)
            if prev is None:
                counts[bucket] = 1
            else:
                counts[bucket] = prev + 1
    finally:
        PyMem_Free(offsets)
    return counts


def cosine_counts(a: dict, b: dict) -> float:
    """Cosine similarity of two sparse nonnegative count vectors."""
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    cdef double dot = 0.0
    cdef double norm_a = 0.0
    cdef double norm_b = 0.0
    cdef double va, vb
    cdef object key, value, other
    for key, value in a.items():
        va = value
        norm_a += va * va
        other = b.get(key)
        if other is not None:
            dot += va * <double> other
    if dot == 0.0:
        return 0.0
    for value in b.values():
        vb = value
        norm_b += vb * vb
    cdef double cos = dot / (sqrt(norm_a) * sqrt(norm_b))
    if cos < 0.0:
        return 0.0
    if cos > 1.0:
        return 1.0
    return cos
