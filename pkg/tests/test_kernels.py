"""Cross-backend contract: the numba kernels and their numpy mirrors must
produce bitwise-identical output on identical input."""


import numpy as np
import pytest

import rfconverge._kernels_numpy as knp
from rfconverge._rng import MASK64

knb = pytest.importorskip("rfconverge._kernels_numba")


@pytest.fixture(scope="module")
def workload():
    rng = np.random.default_rng(99)
    n, p = 150, 6
    X = rng.standard_normal((n, p))
    y = 3.0 * X[:, 0] - X[:, 1] ** 2 + rng.standard_normal(n)
    w = rng.multinomial(n, [1 / n] * n).astype(np.int64)
    rows = np.flatnonzero(w > 0).astype(np.int64)
    return X, y, w, rows


def fit_both(workload, mtry=2, min_leaf=4, seed=31415):
    X, y, w, rows = workload
    args = (X, y, rows, w, np.int64(mtry), np.int64(min_leaf), np.int64(1 << 62),
            np.uint64(seed & MASK64))
    return knb.fit_tree(*args), knp.fit_tree(*args)


def test_fit_tree_identical(workload):
    ta, tb = fit_both(workload)
    names = ("feature", "threshold", "left", "right", "value", "count")
    for name, a, b in zip(names, ta, tb):
        assert np.array_equal(a, b), name
    assert ta[0].shape[0] > 3  # grew a real tree


def test_fit_tree_identical_across_params(workload):
    for mtry, min_leaf, seed in [(1, 1, 0), (6, 2, 7), (3, 10, 123456789)]:
        ta, tb = fit_both(workload, mtry, min_leaf, seed)
        for a, b in zip(ta, tb):
            assert np.array_equal(a, b)


def test_predict_identical(workload):
    X = workload[0]
    ta, tb = fit_both(workload)
    rng = np.random.default_rng(5)
    Xq = rng.standard_normal((200, X.shape[1]))
    pa = knb.predict_tree(*ta[:5], Xq)
    pb = knp.predict_tree(*tb[:5], Xq)
    assert np.array_equal(pa, pb)


def test_replicate_kernels_identical():
    rng = np.random.default_rng(17)
    t, m, B = 9, 6, 25
    resid = rng.standard_normal((t, m))
    counts = np.stack(
        [np.bincount(rng.integers(0, t, t), minlength=t) for _ in range(B)]
    ).astype(np.int64)
    mask = rng.random((t, m)) < 0.4
    assert np.array_equal(knb.mse_replicates(resid, counts), knp.mse_replicates(resid, counts))
    assert np.array_equal(
        knb.oob_replicates(resid, mask, counts), knp.oob_replicates(resid, mask, counts)
    )
    vi = rng.standard_normal((t, 4))
    assert np.array_equal(knb.vi_replicates(vi, counts), knp.vi_replicates(vi, counts))


def test_prefix_and_impurity_identical(workload):
    X, y, w, rows = workload
    rng = np.random.default_rng(23)
    resid = rng.standard_normal((20, 8))
    grid = np.array([1, 2, 5, 20], np.int64)
    assert np.array_equal(knb.prefix_mse_path(resid, grid), knp.prefix_mse_path(resid, grid))
    ta, _ = fit_both(workload)
    ia = knb.impurity_importance(ta[0], ta[1], ta[2], ta[3], X, y, rows, w, X.shape[1])
    ib = knp.impurity_importance(ta[0], ta[1], ta[2], ta[3], X, y, rows, w, X.shape[1])
    assert np.array_equal(ia, ib)


def test_backend_env_flag():
    # RFCONVERGE_BACKEND must pin the backend in a fresh process
    import os
    import subprocess
    import sys

    code = "from rfconverge import kernels; print(kernels.BACKEND)"
    for flag in ("numpy", "numba"):
        env = dict(os.environ, RFCONVERGE_BACKEND=flag)
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == flag


def test_splitmix_python_matches_numba():
    from rfconverge._rng import splitmix64

    state = 12345
    for _ in range(10):
        state_py, z_py = splitmix64(state)
        state_nb, z_nb = knb._sm_next(np.uint64(state))
        assert state_py == int(state_nb) and z_py == int(z_nb)
        state = state_py
