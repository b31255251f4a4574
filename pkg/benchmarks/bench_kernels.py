"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--rows 100]

Times the SMO dual solve, single-tree growth, tree application and a full
8-variant ensemble fit on a synthetic subject, checking that both backends
return identical results along the way.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ssvepbci import kernels
from ssvepbci.classifiers import TrainableSpec, kernel_matrix
from ssvepbci.ensemble import build_ensemble
from ssvepbci.protocol import make_offline_schedule, split_subjectwise_stratified
from ssvepbci.synth import moderate_profile, synth_dataset


def best_of(fn, repeat):
    times = []
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), statistics.median(times), result


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=100, help="training rows for the kernel micro-benchmarks")
    ap.add_argument("--features", type=int, default=60)
    args = ap.parse_args()

    py, cy = kernels.python_backend, kernels.compiled_backend
    if cy is None:
        raise SystemExit("compiled backend unavailable: build it with `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.rows, args.features))
    y = rng.integers(0, 3, args.rows)
    yy = np.where(y == 0, 1.0, -1.0)
    K = kernel_matrix(TrainableSpec("svm_linear"), X, X)
    idx = rng.integers(0, args.rows, args.rows)
    mtry = max(1, int(np.sqrt(args.features)))

    cases = {
        "smo_solve": lambda be: be.smo_solve(K, yy, 1.0, 1e-3, 100000),
        "grow_tree": lambda be: be.grow_tree(X, y, idx, 3, mtry, -1, 1, np.random.default_rng(1)),
    }
    tree = py.grow_tree(X, y, idx, 3, mtry, -1, 1, np.random.default_rng(1))
    probe = rng.standard_normal((2000, args.features))
    cases["tree_apply"] = lambda be: be.tree_apply(probe, *tree[:4])

    print(f"{'kernel':14s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speedup':>8s} {'identical':>9s}")
    for name, fn in cases.items():
        tp, _, rp = best_of(lambda: fn(py), args.repeat)
        tc, _, rc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:14s} {1e3 * tp:12.3f} {1e3 * tc:12.3f} {tp / tc:8.1f}x {str(same(rp, rc)):>9s}")

    ds = synth_dataset(moderate_profile(0), make_offline_schedule(0))
    train, _ = split_subjectwise_stratified(ds)
    original = kernels.backend
    fits = {}
    for label, be in (("python", py), ("cython", cy)):
        kernels.backend = be
        t, _, model = best_of(lambda: build_ensemble(train, stimuli=ds.stimuli, rec_spec=ds.spec),
                              max(1, args.repeat // 2))
        fits[label] = (t, model)
    kernels.backend = original
    tp, mp = fits["python"]
    tc, mc = fits["cython"]
    identical = np.array_equal(mp.weights, mc.weights) and all(
        same(a.model.trees[0].threshold, b.model.trees[0].threshold) if a.model.trees else
        np.array_equal(a.model.svm.dual_coef, b.model.svm.dual_coef)
        for a, b in zip(mp.variants, mc.variants))
    print(f"{'8-variant fit':14s} {1e3 * tp:12.1f} {1e3 * tc:12.1f} {tp / tc:8.1f}x {str(identical):>9s}")


if __name__ == "__main__":
    main()
