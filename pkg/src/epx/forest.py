"""Random-forest base classifier with out-of-bag probability estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import _tree
from ._seeding import chunks, mix, pmap
from .dataset import Dataset
from .metrics import ave_p

FINAL_TREES = 500
FORMATION_TREES = 150


class ForestError(ValueError):
    pass


def canonical(variable_set: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted({int(i) for i in variable_set}))


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``mtry=None`` means ``floor(sqrt(k))`` for a subset of ``k`` variables
    (at least 1, at most ``k``). A node is split only while it is impure and
    its in-bag count exceeds ``min_node_size``. Each tree sees a bootstrap
    sample of size ``n_obs`` drawn with replacement.
    """

    n_trees: int = FINAL_TREES
    mtry: int | None = None
    min_node_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ForestError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ForestError("min_node_size must be >= 1")

    def resolve_mtry(self, k: int) -> int:
        if self.mtry is None:
            return max(1, int(math.isqrt(k)))
        return min(self.mtry, k)

    def with_seed(self, seed: int) -> "ForestConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class Forest:
    """Fitted trees stored as flat node arrays with per-tree offsets.

    ``feature`` holds dataset column indices (``-1`` for leaves); child ids
    are local to each tree. ``inbag[t, i]`` is the bootstrap multiplicity of
    observation ``i`` in tree ``t``; it is ``None`` for forests read back
    from a model file.
    """

    variable_subset: tuple[int, ...]
    feature: np.ndarray = field(repr=False)
    threshold: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    count0: np.ndarray = field(repr=False)
    count1: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    prevalence: float
    inbag: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        prob = self.count1 / np.maximum(self.count0 + self.count1, 1)
        object.__setattr__(self, "_prob", prob)
        for name in ("feature", "threshold", "left", "right", "count0", "count1", "offsets"):
            getattr(self, name).setflags(write=False)

    @property
    def n_trees(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def leaf_prob(self) -> np.ndarray:
        return self._prob

    def tree_nodes(self, t: int) -> slice:
        return slice(int(self.offsets[t]), int(self.offsets[t + 1]))

    def split_variables(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def same_as(self, other: "Forest") -> bool:
        names = ("feature", "threshold", "left", "right", "count0", "count1", "offsets")
        return (
            self.variable_subset == other.variable_subset
            and self.prevalence == other.prevalence
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in names)
        )


def fit(dataset: Dataset, variable_subset: Iterable[int], config: ForestConfig, threads: int = 1) -> Forest:
    """Grow ``config.n_trees`` trees restricted to ``variable_subset``.

    Tree ``t`` draws everything from ``mix(config.seed, t)``, so the forest
    is identical for any ``threads``.
    """
    subset = canonical(variable_subset)
    if not subset:
        raise ForestError("empty variable subset")
    if subset[0] < 0 or subset[-1] >= dataset.n_vars:
        raise ForestError(f"variable subset {subset} outside 0..{dataset.n_vars - 1}")
    y = np.asarray(dataset.labels, dtype=np.int64)
    n = y.size
    if y.sum() == 0 or y.sum() == n:
        raise ForestError("training data must contain both classes")
    X = np.ascontiguousarray(dataset.features[:, subset])
    mtry = config.resolve_mtry(len(subset))
    seeds = np.array([mix(config.seed, t) for t in range(config.n_trees)], dtype=np.uint64)

    def grow(trees: range):
        out = []
        for t in trees:
            state = seeds[t : t + 1].copy()
            counts = _tree.bootstrap_counts(n, state)
            out.append((counts, _tree.grow_tree(X, y, counts, mtry, config.min_node_size, state)))
        return out

    grown = [tree for part in pmap(grow, chunks(config.n_trees, threads), threads) for tree in part]
    sizes = [g[1][0].size for g in grown]
    offsets = np.zeros(len(grown) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(sizes)
    local = np.concatenate([g[1][0] for g in grown])
    lookup = np.asarray(subset, dtype=np.int64)
    feature = np.where(local >= 0, lookup[np.maximum(local, 0)], -1)
    inbag = np.stack([g[0] for g in grown]).astype(np.int32)
    inbag.setflags(write=False)
    return Forest(
        variable_subset=subset,
        feature=feature,
        threshold=np.concatenate([g[1][1] for g in grown]),
        left=np.concatenate([g[1][2] for g in grown]),
        right=np.concatenate([g[1][3] for g in grown]),
        count0=np.concatenate([g[1][4] for g in grown]),
        count1=np.concatenate([g[1][5] for g in grown]),
        offsets=offsets,
        prevalence=float(y.mean()),
        inbag=inbag,
    )


def _check_width(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ForestError("features must be a 2-d matrix")
    need = forest.variable_subset[-1] + 1
    if X.shape[1] < need:
        raise ForestError(f"rows have {X.shape[1]} columns, forest needs at least {need}")
    return X


def predict_proba(forest: Forest, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """Mean over trees of the leaf class-1 proportion."""
    X = _check_width(forest, X)

    def part(trees: range) -> np.ndarray:
        return _tree.predict_sum(
            forest.feature, forest.threshold, forest.left, forest.right,
            forest.leaf_prob, forest.offsets, np.arange(trees.start, trees.stop), X,
        )

    total = sum(pmap(part, chunks(forest.n_trees, threads), threads))
    return np.clip(total / forest.n_trees, 0.0, 1.0)


def oob_probabilities(forest: Forest, dataset: Dataset) -> np.ndarray:
    """Average leaf proportion over trees for which each observation was out of bag.

    Observations that were in bag for every tree get the training prevalence.
    """
    if forest.inbag is None:
        raise ForestError("forest has no in-bag record")
    X = _check_width(forest, dataset.features)
    if X.shape[0] != forest.inbag.shape[1]:
        raise ForestError("dataset is not the one this forest was fitted on")
    sums, hits = _tree.oob_sum(
        forest.feature, forest.threshold, forest.left, forest.right,
        forest.leaf_prob, forest.offsets, forest.inbag, X,
    )
    out = np.full(X.shape[0], forest.prevalence)
    seen = hits > 0
    out[seen] = sums[seen] / hits[seen]
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class EvalRecord:
    variable_set: tuple[int, ...]
    oob_probs: np.ndarray = field(repr=False)
    assessment: float


def evaluate(dataset: Dataset, variable_set: Sequence[int], config: ForestConfig, threads: int = 1) -> EvalRecord:
    """Fit a forest on ``variable_set`` and score its OOB probabilities by AveP."""
    forest = fit(dataset, variable_set, config, threads)
    probs = oob_probabilities(forest, dataset)
    probs.setflags(write=False)
    return EvalRecord(forest.variable_subset, probs, ave_p(probs, dataset.labels))
