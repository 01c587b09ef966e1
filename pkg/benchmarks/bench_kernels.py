"""Compare the compiled n-gram kernels against the pure-Python twins.

Run from the repo root after an editable install:

    python3 benchmarks/bench_kernels.py [--n-texts 2000] [--text-len 200]

The two implementations must produce identical buckets; this script
checks that on every generated text, then times hashing and cosine on
both and reports the speedup.
"""

from __future__ import annotations

import argparse
import random
import statistics
import time

from endcloud.kernels import _ngram_py as pure

try:
    from endcloud.kernels import _ngram_cy as compiled
except ImportError:
    compiled = None

ALPHABET = (
    "abcdefghijklmnopqrstuvwxyz0123456789 ,.?!"
    "你好请问订单快递优惠商店衣服棉质尺寸包邮谢谢亲"
)


def make_texts(count: int, length: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    return [
        "".join(rng.choice(ALPHABET) for _ in range(rng.randint(length // 2, length)))
        for _ in range(count)
    ]


def bench(fn, texts: list[str], n: int, dims: int, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for text in texts:
            fn(text, n, dims)
        best = min(best, time.perf_counter() - start)
    return best


def bench_cosine(module, vectors: list[dict[int, int]], repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for i in range(len(vectors) - 1):
            module.cosine_counts(vectors[i], vectors[i + 1])
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-texts", type=int, default=2000)
    parser.add_argument("--text-len", type=int, default=200)
    parser.add_argument("--ngram", type=int, default=2)
    parser.add_argument("--dims", type=int, default=65536)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if compiled is None:
        print("compiled kernels unavailable; build the package first (pip install -e .)")
        return

    texts = make_texts(args.n_texts, args.text_len, args.seed)

    mismatches = sum(
        1
        for t in texts
        if pure.ngram_bucket_counts(t, args.ngram, args.dims)
        != compiled.ngram_bucket_counts(t, args.ngram, args.dims)
    )
    print(f"equivalence: {len(texts)} texts, {mismatches} mismatches")
    if mismatches:
        raise SystemExit("kernels disagree; benchmark aborted")

    t_pure = bench(pure.ngram_bucket_counts, texts, args.ngram, args.dims)
    t_comp = bench(compiled.ngram_bucket_counts, texts, args.ngram, args.dims)
    print(f"hashing   pure   {t_pure * 1000:8.1f} ms")
    print(f"hashing   cython {t_comp * 1000:8.1f} ms   ({t_pure / t_comp:4.1f}x)")

    vectors = [pure.ngram_bucket_counts(t, args.ngram, args.dims) for t in texts]
    sizes = [len(v) for v in vectors]
    print(f"vectors: median nnz {statistics.median(sizes):.0f}")
    c_pure = bench_cosine(pure, vectors)
    c_comp = bench_cosine(compiled, vectors)
    print(f"cosine    pure   {c_pure * 1000:8.1f} ms")
    print(f"cosine    cython {c_comp * 1000:8.1f} ms   ({c_pure / c_comp:4.1f}x)")


if __name__ == "__main__":
    main()
