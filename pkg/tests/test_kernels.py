import numpy as np
import pytest

from ssvepbci import kernels
from ssvepbci.classifiers import TrainableSpec, kernel_matrix

compiled = kernels.compiled_backend
python = kernels.python_backend
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def data(seed, n=60, d=6, k=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, k, n)
    return X, y


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ["svm_linear", "svm_poly"])
def test_smo_backends_identical(seed, kind):
    X, y = data(seed)
    K = kernel_matrix(TrainableSpec(kind), X, X)
    yy = np.where(y == 0, 1.0, -1.0)
    a = python.smo_solve(K, yy, 1.0, 1e-3, 100000)
    b = compiled.smo_solve(K, yy, 1.0, 1e-3, 100000)
    assert np.array_equal(a[0], b[0])
    assert a[1:] == b[1:]


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("max_features, depth, min_leaf", [(2, -1, 1), (6, 3, 2), (1, -1, 4)])
def test_tree_backends_identical(seed, max_features, depth, min_leaf):
    X, y = data(seed)
    X[:, 1] = np.round(X[:, 1])  # ties in one feature
    idx = np.random.default_rng(seed).integers(0, len(y), len(y))
    a = python.grow_tree(X, y, idx, 3, max_features, depth, min_leaf, np.random.default_rng(seed))
    b = compiled.grow_tree(X, y, idx, 3, max_features, depth, min_leaf, np.random.default_rng(seed))
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    probe = np.random.default_rng(99).standard_normal((40, X.shape[1]))
    assert np.array_equal(python.tree_apply(probe, *a[:4]), compiled.tree_apply(probe, *b[:4]))


def test_backend_name_matches_selection():
    assert kernels.BACKEND == ("cython" if kernels.backend is compiled and compiled is not None else "python")


def test_pure_python_fallback_selected_by_environment():
    import os
    import subprocess
    import sys
    env = dict(os.environ, SSVEPBCI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from ssvepbci import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
