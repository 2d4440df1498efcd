"""Compiled inner loops for exact greedy tree growth.

Rows of a node occupy the same segment ``[s, e)`` of every row of ``idx``
(a p x m array of local row indices, each row sorted by its feature). A
split stably partitions every row's segment, so children stay sorted.
No fastmath: results must be bit-reproducible.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def best_split(X, g, h, idx, s, e, lam, gamma, mch):
    """Best (feature, threshold, gain) over segment [s, e); feature -1 if none.

    Ties keep the first candidate seen: lowest feature, then smallest threshold.
    """
    p = idx.shape[0]
    G = 0.0
    H = 0.0
    for k in range(s, e):
        i = idx[0, k]
        G += g[i]
        H += h[i]
    dp = H + lam
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    if e - s < 2 or dp <= 0.0:
        return best_f, best_thr, best_gain, G, H
    parent = G * G / dp
    for f in range(p):
        gl = 0.0
        hl = 0.0
        for k in range(s, e - 1):
            i = idx[f, k]
            gl += g[i]
            hl += h[i]
            lo = X[i, f]
            hi = X[idx[f, k + 1], f]
            if not hi > lo:
                continue
            hr = H - hl
            dl = hl + lam
            dr = hr + lam
            if hl < mch or hr < mch or dl <= 0.0 or dr <= 0.0:
                continue
            gr = G - gl
            gain = 0.5 * (gl * gl / dl + gr * gr / dr - parent) - gamma
            if gain > best_gain:
                best_gain = gain
                best_f = f
                mid = 0.5 * (lo + hi)
                best_thr = mid if mid > lo else hi
    return best_f, best_thr, best_gain, G, H


@njit(cache=True)
def grow(X, g, h, idx, max_depth, lam, gamma, mch):
    """Grow one tree over all m local rows; ``idx`` is consumed (reordered).

    Returns node arrays (feature, threshold, left, right, weight), the node
    count, and the leaf index of every local row.
    """
    p, m = idx.shape
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    weight = np.zeros(cap)
    leaf_of = np.empty(m, np.int64)
    go_left = np.zeros(m, np.bool_)
    buf = np.empty(m, np.int64)

    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    st_d = np.empty(cap, np.int64)
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = m
    st_d[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_s[top]
        e = st_e[top]
        d = st_d[top]
        if d < max_depth:
            f, thr, gain, G, H = best_split(X, g, h, idx, s, e, lam, gamma, mch)
        else:
            f = -1
            G = 0.0
            H = 0.0
            for k in range(s, e):
                i = idx[0, k]
                G += g[i]
                H += h[i]
        if f < 0:
            if H + lam == 0.0:
                weight[node] = 0.0
            else:
                weight[node] = -G / (H + lam)
            for k in range(s, e):
                leaf_of[idx[0, k]] = node
            continue

        nl = 0
        for k in range(s, e):
            i = idx[0, k]
            go_left[i] = X[i, f] < thr
            if go_left[i]:
                nl += 1
        for r in range(p):
            a = s
            b = s + nl
            for k in range(s, e):
                i = idx[r, k]
                if go_left[i]:
                    buf[a] = i
                    a += 1
                else:
                    buf[b] = i
                    b += 1
            for k in range(s, e):
                idx[r, k] = buf[k]

        feature[node] = f
        threshold[node] = thr
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        # right pushed first so the left subtree is expanded first
        st_node[top] = rchild
        st_s[top] = s + nl
        st_e[top] = e
        st_d[top] = d + 1
        top += 1
        st_node[top] = lchild
        st_s[top] = s
        st_e[top] = s + nl
        st_d[top] = d + 1
        top += 1

    return feature, threshold, left, right, weight, n_nodes, leaf_of
