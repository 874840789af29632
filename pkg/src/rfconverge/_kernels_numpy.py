"""numpy backend: vectorized mirrors of the numba kernels.

Accumulation order is kept bitwise-identical to ``_kernels_numba`` by using
``np.cumsum``/``np.add.at`` (sequential by construction) wherever the jit
kernels accumulate in a scalar loop. Keep the two files in lockstep.
"""

from __future__ import annotations

import numpy as np

from ._rng import MASK64, NODE_STREAM_SALT, splitmix64


def _seqsum(a: np.ndarray, axis: int = 0) -> np.ndarray:
    # Sequential (left-to-right) sum, matching a scalar accumulation loop.
    if a.shape[axis] == 0:
        return np.zeros(a.shape[:axis] + a.shape[axis + 1 :], np.float64)
    return np.cumsum(a, axis=axis).take(-1, axis=axis)


def _node_candidates(seed: int, node: int, p: int, mtry: int) -> np.ndarray:
    state = (seed ^ ((node + 1) * NODE_STREAM_SALT & MASK64)) & MASK64
    cols = np.arange(p, dtype=np.int64)
    kk = min(mtry, p)
    for k in range(kk):
        state, z = splitmix64(state)
        j = k + z % (p - k)
        cols[k], cols[j] = cols[j], cols[k]
    return np.sort(cols[:kk])


def fit_tree(X, y, rows, w, mtry, min_leaf, max_depth, seed):
    """Grow a CART regression tree on the weighted rows.

    Mirrors the numba backend node for node; see that module for the
    algorithm description.
    """
    seed = int(seed)  # plain-int SplitMix avoids numpy scalar overflow warnings
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
    wf_all = w.astype(np.float64)
    stack = [(0, 0, n_pos, 0)]
    n_nodes = 1
    mlf = float(min_leaf)

    while stack:
        node, start, end, depth = stack.pop()
        seg = idx[start:end]
        ws = wf_all[seg]
        ys = y[seg]
        wy = ws * ys
        W = _seqsum(ws)
        sy = _seqsum(wy)
        sy2 = _seqsum(wy * ys)
        value[node] = sy / W
        countw[node] = np.int64(W)

        if W < 2.0 * mlf or depth >= max_depth or ys.min() == ys.max():
            continue
        node_sse = sy2 - sy * sy / W

        best_ch = np.inf
        best_col = -1
        best_thr = 0.0
        for c in _node_candidates(seed, node, p, mtry):
            vals = X[seg, c]
            order = np.argsort(vals, kind="mergesort")
            svals = vals[order]
            wss = ws[order]
            wys = wy[order]
            cw = np.cumsum(wss)
            cwy = np.cumsum(wys)
            cwy2 = np.cumsum(wys * ys[order])
            tw, twy, twy2 = cw[-1], cwy[-1], cwy2[-1]
            lcw = cw[:-1]
            lcwy = cwy[:-1]
            lcwy2 = cwy2[:-1]
            rw = tw - lcw
            valid = (svals[:-1] < svals[1:]) & (lcw >= mlf) & (rw >= mlf)
            if not valid.any():
                continue
            lsse = lcwy2 - lcwy * lcwy / lcw
            rwy = twy - lcwy
            rsse = (twy2 - lcwy2) - rwy * rwy / rw
            ch = np.where(valid, lsse + rsse, np.inf)
            k = int(np.argmin(ch))
            if ch[k] < best_ch:
                best_ch = float(ch[k])
                best_col = int(c)
                best_thr = (svals[k] + svals[k + 1]) * 0.5

        if best_col < 0 or not (best_ch < node_sse):
            continue

        go = X[seg, best_col] <= best_thr
        nl = int(go.sum())
        idx[start:end] = np.concatenate((seg[go], seg[~go]))

        feature[node] = best_col
        threshold[node] = best_thr
        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack.append((rid, start + nl, end, depth + 1))
        stack.append((lid, start, start + nl, depth + 1))

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        countw[:n_nodes],
    )


def predict_tree(feature, threshold, left, right, value, Xq):
    """Route each query row to its leaf; equality goes left."""
    m = Xq.shape[0]
    node = np.zeros(m, np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        cur = node[active]
        f = feature[cur]
        go = Xq[active, f] <= threshold[cur]
        nxt = np.where(go, left[cur], right[cur])
        node[active] = nxt
        active = active[feature[nxt] >= 0]
    return value[node].copy()


def _expand(counts: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(counts.shape[0], dtype=np.int64), counts)


def _psi_counts(resid, counts):
    t = resid.shape[0]
    acc = _seqsum(resid[_expand(counts)], axis=0)
    rho = acc / float(t)
    return _seqsum(rho * rho) / resid.shape[1]


def mse_replicates(resid, counts_mat):
    """Holdout-style bootstrap replicates z_b = psi(resampled) - psi(base)."""
    base = _psi_counts(resid, np.ones(resid.shape[0], np.int64))
    return np.array([_psi_counts(resid, c) - base for c in counts_mat], np.float64)


def _psi_oob_counts(resid, maskf, counts):
    # Running means over the count expansion; see the numba twin for why.
    n = resid.shape[1]
    mean = np.zeros(n, np.float64)
    cnt = np.zeros(n, np.float64)
    for i in _expand(counts):
        mrow = maskf[i]
        cnt += mrow
        mean += mrow * (resid[i] - mean) / np.maximum(cnt, 1.0)
    return _seqsum(mean * mean) / n


def oob_replicates(resid, mask, counts_mat):
    """OOB bootstrap replicates over the training points."""
    maskf = mask.astype(np.float64)
    base = _psi_oob_counts(resid, maskf, np.ones(resid.shape[0], np.int64))
    return np.array(
        [_psi_oob_counts(resid, maskf, c) - base for c in counts_mat], np.float64
    )


def _colmean_counts(mat, counts):
    return _seqsum(mat[_expand(counts)], axis=0) / float(mat.shape[0])


def vi_replicates(vi, counts_mat):
    """Importance-vector replicates: max coordinate deviation of the
    reweighted row mean from the plain row mean."""
    base = _colmean_counts(vi, np.ones(vi.shape[0], np.int64))
    return np.array(
        [np.max(np.abs(_colmean_counts(vi, c) - base), initial=0.0) for c in counts_mat],
        np.float64,
    )


def prefix_mse_path(resid, grid):
    """Mean squared residual of the prefix-averaged ensemble at each grid size."""
    cum = np.cumsum(resid, axis=0)
    out = np.empty(grid.shape[0], np.float64)
    for gi, tt in enumerate(grid):
        rho = cum[tt - 1] / float(tt)
        out[gi] = _seqsum(rho * rho) / resid.shape[1]
    return out


def impurity_importance(feature, threshold, left, right, X, y, rows, w, p):
    """Per-column sums of weighted SSE reduction over the tree's splits."""
    nn = feature.shape[0]
    s0 = np.zeros(nn, np.float64)
    s1 = np.zeros(nn, np.float64)
    s2 = np.zeros(nn, np.float64)
    wf = w[rows].astype(np.float64)
    wy = wf * y[rows]
    wy2 = wf * y[rows] * y[rows]
    node = np.zeros(rows.shape[0], np.int64)
    active = np.arange(rows.shape[0])
    while active.size:
        cur = node[active]
        np.add.at(s0, cur, wf[active])
        np.add.at(s1, cur, wy[active])
        np.add.at(s2, cur, wy2[active])
        internal = feature[cur] >= 0
        active = active[internal]
        if not active.size:
            break
        cur = node[active]
        go = X[rows[active], feature[cur]] <= threshold[cur]
        node[active] = np.where(go, left[cur], right[cur])

    with np.errstate(invalid="ignore", divide="ignore"):
        sse = np.where(s0 > 0.0, s2 - s1 * s1 / s0, 0.0)
    imp = np.zeros(p, np.float64)
    internal = np.flatnonzero(feature >= 0)
    np.add.at(imp, feature[internal], sse[internal] - sse[left[internal]] - sse[right[internal]])
    return imp
