"""numba backend: jit-compiled hot kernels.

Every kernel here has a vectorized mirror in ``_kernels_numpy`` that produces
bitwise-identical output (same accumulation order, same tie-breaking); the
benchmark in benchmarks/bench_backends.py checks that claim. Keep the two
files in lockstep when touching either.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._rng import NODE_STREAM_SALT

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _sm_next(state):
    # SplitMix64; mirrors _rng.splitmix64 on uint64.
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(**_JIT)
def fit_tree(X, y, rows, w, mtry, min_leaf, max_depth, seed):
    """Grow a CART regression tree on the weighted rows.

    rows: indices with w > 0; w: full-length integer bag multiplicities.
    Returns packed node arrays (feature, threshold, left, right, value,
    countw) truncated to the node count; feature == -1 marks a leaf.
    """
    n_pos = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n_pos + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap, np.float64)
    countw = np.zeros(cap, np.int64)

    idx = rows.copy()
    stack = np.empty((cap, 4), np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_pos
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    cols = np.empty(p, np.int64)
    vals = np.empty(n_pos, np.float64)
    scratch = np.empty(n_pos, np.int64)
    mlf = np.float64(min_leaf)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]

        # Node stats in segment order.
        W = 0.0
        sy = 0.0
        sy2 = 0.0
        ylo = np.inf
        yhi = -np.inf
        for q in range(start, end):
            r = idx[q]
            wf = np.float64(w[r])
            yi = y[r]
            W += wf
            sy += wf * yi
            sy2 += wf * yi * yi
            if yi < ylo:
                ylo = yi
            if yi > yhi:
                yhi = yi
        value[node] = sy / W
        countw[node] = np.int64(W)

        if W < 2.0 * mlf or depth >= max_depth or ylo == yhi:
            continue
        node_sse = sy2 - sy * sy / W

        # mtry candidate columns, partial Fisher-Yates keyed by (seed, node).
        state = np.uint64(seed) ^ (np.uint64(node + 1) * np.uint64(NODE_STREAM_SALT))
        for c in range(p):
            cols[c] = c
        kk = mtry if mtry < p else p
        for k in range(kk):
            state, z = _sm_next(state)
            j = k + np.int64(z % np.uint64(p - k))
            tmp = cols[k]
            cols[k] = cols[j]
            cols[j] = tmp
        # Sort candidates ascending: ties in SSE resolve to the smallest column.
        for a in range(1, kk):
            key = cols[a]
            b = a - 1
            while b >= 0 and cols[b] > key:
                cols[b + 1] = cols[b]
                b -= 1
            cols[b + 1] = key

        msz = end - start
        best_ch = np.inf
        best_col = np.int64(-1)
        best_thr = 0.0
        for ci in range(kk):
            c = cols[ci]
            for q in range(msz):
                vals[q] = X[idx[start + q], c]
            order = np.argsort(vals[:msz], kind="mergesort")
            # Totals in sorted order so right-side stats stay consistent.
            tw = 0.0
            twy = 0.0
            twy2 = 0.0
            for k in range(msz):
                r = idx[start + order[k]]
                wf = np.float64(w[r])
                yi = y[r]
                tw += wf
                twy += wf * yi
                twy2 += wf * yi * yi
            cw = 0.0
            cwy = 0.0
            cwy2 = 0.0
            for k in range(msz - 1):
                r = idx[start + order[k]]
                wf = np.float64(w[r])
                yi = y[r]
                cw += wf
                cwy += wf * yi
                cwy2 += wf * yi * yi
                vk = vals[order[k]]
                vk1 = vals[order[k + 1]]
                if vk < vk1 and cw >= mlf and (tw - cw) >= mlf:
                    lsse = cwy2 - cwy * cwy / cw
                    rw = tw - cw
                    rwy = twy - cwy
                    rwy2 = twy2 - cwy2
                    rsse = rwy2 - rwy * rwy / rw
                    ch = lsse + rsse
                    if ch < best_ch:
                        best_ch = ch
                        best_col = c
                        best_thr = (vk + vk1) * 0.5

        if best_col < 0 or not (best_ch < node_sse):
            continue

        # Stable partition of the segment around the chosen split.
        nl = 0
        nr = 0
        for q in range(start, end):
            r = idx[q]
            if X[r, best_col] <= best_thr:
                idx[start + nl] = r
                nl += 1
            else:
                scratch[nr] = r
                nr += 1
        for q in range(nr):
            idx[start + nl + q] = scratch[q]

        feature[node] = best_col
        threshold[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack[top, 0] = rid
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        countw[:n_nodes],
    )


@njit(**_JIT)
def predict_tree(feature, threshold, left, right, value, Xq):
    """Route each query row to its leaf; equality goes left."""
    m = Xq.shape[0]
    out = np.empty(m, np.float64)
    for j in range(m):
        node = 0
        while feature[node] >= 0:
            if Xq[j, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[j] = value[node]
    return out


@njit(**_JIT)
def _psi_counts(resid, counts):
    # Mean squared residual of the count-reweighted ensemble average.
    # Count-expansion summation: the baseline (all-ones counts) walks the
    # exact same addition sequence, so identical residual rows give an
    # exactly zero bootstrap replicate.
    t, m = resid.shape
    acc = np.zeros(m, np.float64)
    for i in range(t):
        c = counts[i]
        for k in range(c):
            for j in range(m):
                acc[j] += resid[i, j]
    tt = np.float64(t)
    s = 0.0
    for j in range(m):
        rho = acc[j] / tt
        s += rho * rho
    return s / m


@njit(**_JIT)
def mse_replicates(resid, counts_mat):
    """Holdout-style bootstrap replicates z_b = psi(resampled) - psi(base)."""
    B = counts_mat.shape[0]
    t = resid.shape[0]
    ones = np.ones(t, np.int64)
    base = _psi_counts(resid, ones)
    z = np.empty(B, np.float64)
    for b in range(B):
        z[b] = _psi_counts(resid, counts_mat[b]) - base
    return z


@njit(**_JIT)
def _psi_oob_counts(resid, mask, counts):
    # OOB variant: per point, average residuals over its OOB trees with
    # bootstrap multiplicities. Running means instead of sum/divide: their
    # fixed point on identical inputs makes identical residual rows give an
    # exactly zero replicate even though the denominators vary per resample.
    # A point whose OOB multiplicity is zero keeps mean 0, which is the
    # prediction-equals-label fallback.
    t, n = resid.shape
    mean = np.zeros(n, np.float64)
    cnt = np.zeros(n, np.float64)
    for i in range(t):
        c = counts[i]
        for k in range(c):
            for j in range(n):
                if mask[i, j]:
                    cnt[j] += 1.0
                    mean[j] += (resid[i, j] - mean[j]) / cnt[j]
    s = 0.0
    for j in range(n):
        s += mean[j] * mean[j]
    return s / n


@njit(**_JIT)
def oob_replicates(resid, mask, counts_mat):
    """OOB bootstrap replicates over the training points."""
    B = counts_mat.shape[0]
    t = resid.shape[0]
    ones = np.ones(t, np.int64)
    base = _psi_oob_counts(resid, mask, ones)
    z = np.empty(B, np.float64)
    for b in range(B):
        z[b] = _psi_oob_counts(resid, mask, counts_mat[b]) - base
    return z


@njit(**_JIT)
def _colmean_counts(mat, counts):
    t, p = mat.shape
    acc = np.zeros(p, np.float64)
    for i in range(t):
        c = counts[i]
        for k in range(c):
            for j in range(p):
                acc[j] += mat[i, j]
    return acc / np.float64(t)


@njit(**_JIT)
def vi_replicates(vi, counts_mat):
    """Importance-vector replicates: max coordinate deviation of the
    reweighted row mean from the plain row mean."""
    B = counts_mat.shape[0]
    t = vi.shape[0]
    p = vi.shape[1]
    ones = np.ones(t, np.int64)
    base = _colmean_counts(vi, ones)
    eps = np.empty(B, np.float64)
    for b in range(B):
        mu = _colmean_counts(vi, counts_mat[b])
        worst = 0.0
        for j in range(p):
            d = abs(mu[j] - base[j])
            if d > worst:
                worst = d
        eps[b] = worst
    return eps


@njit(**_JIT)
def prefix_mse_path(resid, grid):
    """Mean squared residual of the prefix-averaged ensemble at each grid size."""
    t, m = resid.shape
    g = grid.shape[0]
    out = np.empty(g, np.float64)
    acc = np.zeros(m, np.float64)
    gi = 0
    for i in range(t):
        for j in range(m):
            acc[j] += resid[i, j]
        while gi < g and grid[gi] == i + 1:
            tt = np.float64(i + 1)
            s = 0.0
            for j in range(m):
                rho = acc[j] / tt
                s += rho * rho
            out[gi] = s / m
            gi += 1
    return out


@njit(**_JIT)
def impurity_importance(feature, threshold, left, right, X, y, rows, w, p):
    """Per-column sums of weighted SSE reduction over the tree's splits."""
    nn = feature.shape[0]
    s0 = np.zeros(nn, np.float64)
    s1 = np.zeros(nn, np.float64)
    s2 = np.zeros(nn, np.float64)
    for q in range(rows.shape[0]):
        r = rows[q]
        wf = np.float64(w[r])
        wy = wf * y[r]
        wy2 = wf * y[r] * y[r]
        node = 0
        while True:
            s0[node] += wf
            s1[node] += wy
            s2[node] += wy2
            if feature[node] < 0:
                break
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
    imp = np.zeros(p, np.float64)
    for k in range(nn):
        if feature[k] >= 0:
            sk = s2[k] - s1[k] * s1[k] / s0[k] if s0[k] > 0.0 else 0.0
            l = left[k]
            r = right[k]
            sl = s2[l] - s1[l] * s1[l] / s0[l] if s0[l] > 0.0 else 0.0
            sr = s2[r] - s1[r] * s1[r] / s0[r] if s0[r] > 0.0 else 0.0
            imp[feature[k]] += sk - sl - sr
    return imp
