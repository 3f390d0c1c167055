"""Time the numba and numpy classifier kernels on the desk-scale corpus.

    python3 benchmarks/bench_kernels.py [--per-class 600] [--repeat 3]

Both backends run in this process; the first numba call (compilation, or
loading the on-disk cache) is timed separately as warm-up.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vmlab import _accel, _kernels
from vmlab.classifier import FeatureConfig, _labels, feature_matrix
from vmlab.dataset import CorpusSpec, build_corpus, corpus_artifacts, split


def fresh_state(dim: int):
    return [np.zeros((3, dim)), np.zeros(3), np.zeros((3, dim)), np.zeros(3), np.zeros((6, dim)), np.zeros(6), np.zeros((6, dim)), np.zeros(6)]


def time_epoch(fn, X, ym, ys, dim, order, repeat):
    best = float("inf")
    for _ in range(repeat):
        st = fresh_state(dim)
        t = time.perf_counter()
        fn(order, X.indptr, X.indices, X.values, ym, ys, *st, 0.1, 1e-8)
        best = min(best, time.perf_counter() - t)
    return best, st


def time_scores(fn, X, W, b, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(X.indptr, X.indices, X.values, W, b)
        best = min(best, time.perf_counter() - t)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=600)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    records, _ = split(build_corpus(corpus_artifacts(CorpusSpec()), args.per_class))
    records = sorted(records, key=lambda r: r.id)
    cfg = FeatureConfig()
    X = feature_matrix([r.tokens for r in records], cfg)
    ym, ys = _labels(records)
    order = np.random.default_rng(42).permutation(len(records)).astype(np.int64)
    dim = cfg.hash_dim
    print(f"records={len(records)} nnz={len(X.indices)} dim={dim} numba available={_accel.HAVE_NUMBA}")

    t = time.perf_counter()
    _kernels.adagrad_epoch_numba(order[:2], X.indptr, X.indices, X.values, ym, ys, *fresh_state(dim), 0.1, 1e-8)
    _kernels.scores_numba(X.indptr[:2], X.indices, X.values, np.zeros((6, dim)), np.zeros(6))
    print(f"numba warm-up (compile or cache load): {time.perf_counter() - t:.2f}s")

    t_nb, st_nb = time_epoch(_kernels.adagrad_epoch_numba, X, ym, ys, dim, order, args.repeat)
    t_np, st_np = time_epoch(_kernels.adagrad_epoch_numpy, X, ym, ys, dim, order, args.repeat)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(st_nb, st_np))
    print(f"adagrad epoch   numba {t_nb * 1e3:8.1f} ms   numpy {t_np * 1e3:8.1f} ms   speedup {t_np / t_nb:5.1f}x   max|diff| {diff:.1e}")

    W, b = st_nb[4], st_nb[5]
    s_nb, o_nb = time_scores(_kernels.scores_numba, X, W, b, args.repeat)
    s_np, o_np = time_scores(_kernels.scores_numpy, X, W, b, args.repeat)
    print(f"scores          numba {s_nb * 1e3:8.1f} ms   numpy {s_np * 1e3:8.1f} ms   speedup {s_np / s_nb:5.1f}x   max|diff| {np.max(np.abs(o_nb - o_np)):.1e}")


if __name__ == "__main__":
    main()
