"""Data-adaptive initial groups: Jaccard dissimilarity + Ward clustering of variables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import BINARY, Dataset, DatasetError, GroupingPlan, group_by_names


class GroupingError(ValueError):
    pass


def jaccard_distance(xi, xj) -> float:
    """``1 - |both 1| / |either 1|`` for two binary columns."""
    xi = np.asarray(xi)
    xj = np.asarray(xj)
    if xi.shape != xj.shape:
        raise GroupingError("columns differ in length")
    if not (np.isin(xi, (0, 1)).all() and np.isin(xj, (0, 1)).all()):
        raise GroupingError("Jaccard distance needs binary columns")
    a = xi.astype(bool)
    b = xj.astype(bool)
    either = int(np.count_nonzero(a | b))
    if either == 0:
        raise GroupingError("Jaccard distance is undefined for two all-zero columns")
    return 1.0 - np.count_nonzero(a & b) / either


def jaccard_matrix(X) -> np.ndarray:
    """Pairwise Jaccard distances between the columns of a binary matrix."""
    B = np.asarray(X)
    if not np.isin(B, (0, 1)).all():
        raise GroupingError("Jaccard distance needs binary columns")
    B = B.astype(np.float64)
    ones = B.sum(axis=0)
    if (ones == 0).any():
        raise GroupingError(f"all-zero column(s) {np.flatnonzero(ones == 0).tolist()}")
    both = B.T @ B
    either = ones[:, None] + ones[None, :] - both
    D = 1.0 - both / either
    np.fill_diagonal(D, 0.0)
    return D


@dataclass(frozen=True)
class Dendrogram:
    """Merge events ``(id_a, id_b, height, size)``; leaves are ``0..D-1``,
    the cluster created by event ``t`` gets id ``D + t``."""

    merges: tuple[tuple[int, int, float, int], ...]
    n_leaves: int


def ward_linkage(dist, squared: bool = False) -> Dendrogram:
    """Agglomerate with Ward's Lance-Williams update applied to ``dist`` as given.

    ``squared=True`` squares the input first and reports square-rooted
    heights (the ``ward.D2`` convention). Equal heights merge the pair with
    the lowest cluster ids first.
    """
    D = np.array(dist, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise GroupingError("dissimilarity matrix must be square")
    if not np.allclose(D, D.T) or np.any(np.diag(D) != 0):
        raise GroupingError("dissimilarity matrix must be symmetric with zero diagonal")
    if squared:
        D = D**2
    active = list(range(n))
    ids = list(range(n))
    sizes = np.ones(n)
    W = D.copy()
    np.fill_diagonal(W, np.inf)
    merges = []
    for step in range(n - 1):
        sub = W[np.ix_(active, active)]
        h = sub.min()
        cands = np.argwhere(sub == h)
        # lowest cluster-id pair among exact ties
        best = min(cands, key=lambda c: tuple(sorted((ids[active[c[0]]], ids[active[c[1]]]))))
        i, j = active[best[0]], active[best[1]]
        a, b = sorted((ids[i], ids[j]))
        ni, nj = sizes[i], sizes[j]
        others = np.array([k for k in active if k != i and k != j], dtype=np.int64)
        if others.size:
            nk = sizes[others]
            upd = ((ni + nk) * W[i, others] + (nj + nk) * W[j, others] - nk * W[i, j]) / (ni + nj + nk)
            W[i, others] = upd
            W[others, i] = upd
        sizes[i] = ni + nj
        ids[i] = n + step
        active.remove(j)
        merges.append((a, b, float(np.sqrt(h)) if squared else float(h), int(ni + nj)))
    return Dendrogram(tuple(merges), n)


def cut(dendrogram: Dendrogram, k: int) -> list[list[int]]:
    """Clusters after the first ``D - k`` merges, ordered by smallest member."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise GroupingError(f"k must lie in 1..{n}, got {k}")
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for t, (a, b, _, _) in enumerate(dendrogram.merges[: n - k]):
        members[n + t] = members.pop(a) + members.pop(b)
    return sorted((sorted(m) for m in members.values()), key=lambda m: m[0])


def ward_cluster(dist, k: int, squared: bool = False) -> GroupingPlan:
    n = np.asarray(dist).shape[0]
    if not 1 <= k <= n:
        raise GroupingError(f"k must lie in 1..{n}, got {k}")
    return GroupingPlan(tuple(tuple(g) for g in cut(ward_linkage(dist, squared), k)), "clusters")


def cluster_groups(dataset: Dataset, k: int | None = None, squared: bool = False) -> GroupingPlan:
    """Cluster binary columns into ``k`` groups; continuous columns stay singletons.

    ``k`` defaults to the number of binary name-based groups.
    """
    binary = [j for j, c in enumerate(dataset.columns) if c.kind == BINARY]
    continuous = [j for j, c in enumerate(dataset.columns) if c.kind != BINARY]
    groups: list[tuple[int, ...]] = []
    if binary:
        if k is None:
            k = sum(1 for g in group_by_names(dataset).groups if all(i in binary for i in g))
            k = max(k, 1)
        dist = jaccard_matrix(dataset.features[:, binary])
        for g in cut(ward_linkage(dist, squared), min(k, len(binary))):
            groups.append(tuple(binary[i] for i in g))
    elif k is not None:
        raise DatasetError("no binary columns to cluster")
    groups.extend((j,) for j in continuous)
    return GroupingPlan(tuple(groups), "clusters")


def ward_objective(dist, clusters, squared: bool = False) -> float:
    """Sum over clusters of ``(1/|C|) * sum_{i<j in C} d_ij`` (``d_ij**2`` if squared)."""
    D = np.asarray(dist, dtype=np.float64)
    if squared:
        D = D**2
    total = 0.0
    for c in clusters:
        c = list(c)
        total += D[np.ix_(c, c)].sum() / 2.0 / len(c)
    return total
