"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; setting
``SSVEPBCI_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels
compiled_backend = None

if os.environ.get("SSVEPBCI_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if backend is compiled_backend else "python"


def grow_tree(X, y, indices, n_classes, max_features, max_depth, min_leaf, rng):
    impl = backend
    if impl is compiled_backend and len(indices) > compiled_backend.MAX_EXACT_ROWS:
        impl = python_backend
    return impl.grow_tree(X, y, indices, n_classes, max_features, max_depth, min_leaf, rng)


def smo_solve(K, y, C, tol, max_iter):
    return backend.smo_solve(K, y, C, tol, max_iter)


def tree_apply(X, feature, threshold, left, right):
    return backend.tree_apply(X, feature, threshold, left, right)
