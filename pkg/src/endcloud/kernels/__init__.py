"""Hashed character n-gram kernels with a compiled fast path.

The compiled extension (Cython) is used when it was built; otherwise the
pure-Python twin takes over with identical semantics. Set
``ECC_PURE_KERNELS=1`` to force the pure path (used by the benchmark and
the equivalence tests).
"""

from __future__ import annotations

import os

from . import _ngram_py

if os.environ.get("ECC_PURE_KERNELS") == "1":
    _impl = _ngram_py
else:
    try:
        from . import _ngram_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _ngram_py

KERNEL_BACKEND: str = _impl.BACKEND

fnv1a64 = _impl.fnv1a64
ngram_bucket_counts = _impl.ngram_bucket_counts
cosine_counts = _impl.cosine_counts

FNV64_OFFSET = _ngram_py.FNV64_OFFSET
FNV64_PRIME = _ngram_py.FNV64_PRIME

__all__ = [
    "KERNEL_BACKEND",
    "FNV64_OFFSET",
    "FNV64_PRIME",
    "fnv1a64",
    "ngram_bucket_counts",
    "cosine_counts",
]
