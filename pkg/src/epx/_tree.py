"""Compiled kernels for Gini classification trees.

A tree is stored as parallel node arrays: ``feature`` (-1 marks a leaf),
``threshold`` (go left when ``x <= threshold``), ``left``/``right`` child
ids local to the tree, and in-bag class counts ``count0``/``count1``.
All randomness inside a tree comes from one 64-bit seed run through
splitmix64, so a tree is a pure function of its inputs and seed.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

_REL_TOL = 1e-12


@njit(cache=True, nogil=True)
def _next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _randbelow(state, k):
    u = np.float64(_next(state) >> _S11) * _INV53
    r = np.int64(u * k)
    return r if r < k else k - 1


@njit(cache=True, nogil=True)
def bootstrap_counts(n, state):
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        counts[_randbelow(state, n)] += 1
    return counts


@njit(cache=True, nogil=True)
def best_split(X, y, w, idx, start, end, candidates):
    """Best Gini split of samples ``idx[start:end]`` over ``candidates``.

    Candidates are scanned in the given order and thresholds ascending; a
    later split replaces the incumbent only when strictly better, so the
    caller controls tie-breaking through candidate order. Returns
    ``(feature, threshold, decrease)`` with ``feature == -1`` when every
    candidate is constant on the node.
    """
    n0 = 0.0
    n1 = 0.0
    for t in range(start, end):
        i = idx[t]
        if y[i] == 1:
            n1 += w[i]
        else:
            n0 += w[i]
    total = n0 + n1
    parent = (n0 * n0 + n1 * n1) / total
    best_feat = -1
    best_thr = 0.0
    best_crit = -1.0
    m = end - start
    vals = np.empty(m)
    for c in range(candidates.shape[0]):
        f = candidates[c]
        for t in range(m):
            vals[t] = X[idx[start + t], f]
        order = np.argsort(vals, kind="mergesort")
        l0 = 0.0
        l1 = 0.0
        for t in range(m - 1):
            i = idx[start + order[t]]
            if y[i] == 1:
                l1 += w[i]
            else:
                l0 += w[i]
            v = vals[order[t]]
            v_next = vals[order[t + 1]]
            if v_next <= v:
                continue
            r0 = n0 - l0
            r1 = n1 - l1
            crit = (l0 * l0 + l1 * l1) / (l0 + l1) + (r0 * r0 + r1 * r1) / (r0 + r1)
            if best_feat == -1 or crit > best_crit + _REL_TOL * best_crit:
                best_feat = f
                best_crit = crit
                thr = 0.5 * (v + v_next)
                if thr >= v_next:
                    thr = v
                best_thr = thr
    if best_feat == -1:
        return -1, 0.0, 0.0
    return best_feat, best_thr, best_crit - parent


@njit(cache=True, nogil=True)
def grow_tree(X, y, counts, mtry, min_node_size, state):
    """Grow one tree on in-bag multiplicities ``counts``."""
    n, k = X.shape
    n_in = 0
    for i in range(n):
        if counts[i] > 0:
            n_in += 1
    idx = np.empty(n_in, dtype=np.int64)
    j = 0
    for i in range(n):
        if counts[i] > 0:
            idx[j] = i
            j += 1
    cap = 2 * n_in + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    count0 = np.zeros(cap, dtype=np.int64)
    count1 = np.zeros(cap, dtype=np.int64)
    n_start = np.zeros(cap, dtype=np.int64)
    n_end = np.zeros(cap, dtype=np.int64)

    perm = np.arange(k)
    cand = np.empty(mtry, dtype=np.int64)
    buf = np.empty(n_in, dtype=np.int64)
    stack = np.empty(cap, dtype=np.int64)

    n_nodes = 1
    n_start[0] = 0
    n_end[0] = n_in
    top = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s = n_start[node]
        e = n_end[node]
        c0 = 0
        c1 = 0
        for t in range(s, e):
            i = idx[t]
            if y[i] == 1:
                c1 += counts[i]
            else:
                c0 += counts[i]
        count0[node] = c0
        count1[node] = c1
        if c0 == 0 or c1 == 0 or c0 + c1 <= min_node_size or e - s < 2:
            continue
        # uniform draw of mtry candidates without replacement
        for a in range(mtry):
            b = a + _randbelow(state, k - a)
            tmp = perm[a]
            perm[a] = perm[b]
            perm[b] = tmp
        for a in range(mtry):
            cand[a] = perm[a]
        cand.sort()
        f, thr, _ = best_split(X, y, counts, idx, s, e, cand)
        if f == -1:
            continue
        # stable partition: left block then right block
        nl = 0
        for t in range(s, e):
            if X[idx[t], f] <= thr:
                buf[nl] = idx[t]
                nl += 1
        nr = nl
        for t in range(s, e):
            if X[idx[t], f] > thr:
                buf[nr] = idx[t]
                nr += 1
        for t in range(e - s):
            idx[s + t] = buf[t]
        feature[node] = f
        threshold[node] = thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        n_start[lid] = s
        n_end[lid] = s + nl
        n_start[rid] = s + nl
        n_end[rid] = e
        # push right first so the left subtree is expanded first
        stack[top] = rid
        stack[top + 1] = lid
        top += 2
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        count0[:n_nodes].copy(),
        count1[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def leaf_of(feature, threshold, left, right, base, row):
    node = 0
    while feature[base + node] != -1:
        if row[feature[base + node]] <= threshold[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@njit(cache=True, nogil=True)
def predict_sum(feature, threshold, left, right, prob, offsets, trees, X):
    """Sum over ``trees`` of leaf class-1 proportion, per row of ``X``."""
    out = np.zeros(X.shape[0])
    for r in range(X.shape[0]):
        row = X[r]
        acc = 0.0
        for t in trees:
            acc += prob[leaf_of(feature, threshold, left, right, offsets[t], row)]
        out[r] = acc
    return out


@njit(cache=True, nogil=True)
def oob_sum(feature, threshold, left, right, prob, offsets, inbag, X):
    """Per-observation sum of leaf proportions and count over trees where it is out of bag."""
    n = X.shape[0]
    sums = np.zeros(n)
    hits = np.zeros(n, dtype=np.int64)
    for t in range(inbag.shape[0]):
        base = offsets[t]
        for i in range(n):
            if inbag[t, i] == 0:
                sums[i] += prob[leaf_of(feature, threshold, left, right, base, X[i])]
                hits[i] += 1
    return sums, hits
