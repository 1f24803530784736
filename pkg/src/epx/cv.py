"""Balanced k-fold cross-validation, win counts and the diversity map."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ._seeding import mix, pmap, rng_for
from .dataset import Dataset, GroupingPlan
from .ensemble import EpxModel, fit_epx, member_probabilities
from .forest import ForestConfig, canonical, fit, predict_proba
from .formation import FormationConfig, form_phalanxes
from .metrics import DEFAULT_SHORTLIST, ave_p, initial_enhancement, ranks

log = logging.getLogger(__name__)


class CvError(ValueError):
    pass


@dataclass(frozen=True)
class FoldAssignment:
    """``folds[i]`` is the 0-based fold of observation ``i``."""

    folds: np.ndarray = field(repr=False)
    k: int
    seed: int

    def test_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.folds == f)

    def train_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.folds != f)


def balanced_folds(labels, k: int, seed: int) -> FoldAssignment:
    """Shuffle actives and inactives separately and deal them round-robin.

    The inactives continue the deal where the actives stopped, so fold sizes
    and per-fold active counts each differ by at most one.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2:
        raise CvError("k must be >= 2")
    if k > n:
        raise CvError(f"k={k} exceeds the number of observations ({n})")
    if labels.sum() < 1:
        raise CvError("balanced folds need at least one active")
    rng = rng_for(seed)
    order = np.concatenate(
        [rng.permutation(np.flatnonzero(labels == 1)), rng.permutation(np.flatnonzero(labels != 1))]
    )
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    folds.setflags(write=False)
    return FoldAssignment(folds, k, seed)


class Pipeline(Protocol):
    name: str

    def fit_predict(self, train: Dataset, X_test: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Ensemble probabilities for ``X_test`` and, if available, a ``(p, n_test)`` member matrix."""


@dataclass(frozen=True)
class PlainForest:
    """A single forest on ``variables`` (all columns when ``None``)."""

    config: ForestConfig = ForestConfig()
    variables: tuple[int, ...] | None = None
    name: str = "RF"

    def fit_predict(self, train, X_test, seed):
        cols = range(train.n_vars) if self.variables is None else self.variables
        forest = fit(train, cols, self.config.with_seed(seed))
        return predict_proba(forest, X_test), None


@dataclass(frozen=True)
class FixedEpx:
    """EPX with phalanxes formed once beforehand; only the forests are refitted."""

    phalanxes: tuple[tuple[int, ...], ...]
    config: ForestConfig = ForestConfig()
    name: str = "EPX"

    def fit_predict(self, train, X_test, seed):
        model = fit_epx(train, self.phalanxes, self.config.with_seed(seed))
        members = member_probabilities(model, X_test)
        return members.mean(axis=0), members


@dataclass(frozen=True)
class ReformEpx:
    """EPX with phalanx formation rerun on every training split."""

    plan: GroupingPlan
    formation: FormationConfig = FormationConfig()
    config: ForestConfig = ForestConfig()
    name: str = "EPX-reform"

    def fit_predict(self, train, X_test, seed):
        fc = FormationConfig(**{**self.formation.__dict__, "evaluator_seed": mix(seed, 1)})
        result = form_phalanxes(train, self.plan, fc)
        model = fit_epx(train, result.phalanxes, self.config.with_seed(mix(seed, 2)))
        return member_probabilities(model, X_test).mean(axis=0), None


@dataclass
class CvResult:
    pipeline: str
    probs: np.ndarray = field(repr=False)  # (repeats, n_obs)
    avep: np.ndarray
    ie: np.ndarray
    folds: np.ndarray = field(repr=False)  # (repeats, n_obs)
    k: int
    seed: int
    ie_shortlist: int
    member_probs: np.ndarray | None = field(default=None, repr=False)  # (repeats, p, n_obs)
    phalanxes: tuple[tuple[int, ...], ...] | None = None

    @property
    def repeats(self) -> int:
        return int(self.avep.size)


def cross_validate(
    dataset: Dataset,
    pipeline: Pipeline,
    k: int = 10,
    repeats: int = 16,
    seed: int = 0,
    ie_shortlist: int = DEFAULT_SHORTLIST,
    threads: int = 1,
) -> CvResult:
    """Repeated balanced k-fold CV of ``pipeline``.

    Repeat ``r`` deals folds from ``mix(seed, r)``; fold ``f`` of that repeat
    trains with seed ``mix(seed, r, f)``. Two pipelines run with the same
    ``seed`` therefore see identical folds, which makes per-repeat
    comparisons paired. The IE shortlist is capped at ``n_obs``.
    """
    if repeats < 1:
        raise CvError("repeats must be >= 1")
    if dataset.n_active < 2:
        raise CvError("cross-validation needs at least two actives")
    assignments = [balanced_folds(dataset.labels, k, mix(seed, r)) for r in range(repeats)]
    tasks = [(r, f) for r in range(repeats) for f in range(k)]

    def run(task):
        r, f = task
        fa = assignments[r]
        train_rows = fa.train_rows(f)
        if dataset.labels[train_rows].sum() == 0:
            raise CvError(f"repeat {r}, fold {f}: training split has no actives")
        train = dataset.subset_rows(train_rows)
        return pipeline.fit_predict(train, dataset.features[fa.test_rows(f)], mix(seed, r, f))

    outputs = pmap(run, tasks, threads)
    n = dataset.n_obs
    probs = np.empty((repeats, n))
    members = None
    first_members = outputs[0][1]
    if first_members is not None:
        members = np.empty((repeats, first_members.shape[0], n))
    for (r, f), (p, mp) in zip(tasks, outputs):
        rows = assignments[r].test_rows(f)
        probs[r, rows] = p
        if members is not None:
            members[r][:, rows] = mp
    shortlist = min(ie_shortlist, n)
    avep = np.array([ave_p(probs[r], dataset.labels) for r in range(repeats)])
    ie = np.array([initial_enhancement(probs[r], dataset.labels, shortlist) for r in range(repeats)])
    log.info("%s: mean AveP %.4f, mean IE %.3f over %d repeats", pipeline.name, avep.mean(), ie.mean(), repeats)
    return CvResult(
        pipeline=pipeline.name,
        probs=probs,
        avep=avep,
        ie=ie,
        folds=np.stack([a.folds for a in assignments]),
        k=k,
        seed=seed,
        ie_shortlist=shortlist,
        member_probs=members,
        phalanxes=getattr(pipeline, "phalanxes", None),
    )


def win_count(result: CvResult, baseline: CvResult) -> int:
    """Repeats in which ``result`` has strictly higher AveP than ``baseline``."""
    if result.repeats != baseline.repeats or not np.array_equal(result.folds, baseline.folds):
        raise CvError("win counts need paired runs (same seed, k and repeats)")
    return int(np.sum(result.avep > baseline.avep))


@dataclass
class DiversityMap:
    """Ranks of the actives (rows, best ensemble rank first) under each column."""

    columns: list[str]
    rows: np.ndarray  # observation indices of the actives
    ranks: np.ndarray  # (n_active, n_columns)
    avep: list[float]


def diversity_map(
    dataset: Dataset,
    cv: CvResult,
    model: EpxModel | None = None,
    baseline: CvResult | None = None,
    repeat: int = 0,
) -> DiversityMap:
    """Rank matrix of cross-validated probabilities for phalanx members, EPX and a baseline."""
    if cv.member_probs is None:
        raise CvError("diversity map needs a fixed-phalanx EPX cross-validation")
    if model is not None and cv.phalanxes is not None and tuple(map(canonical, model.phalanxes)) != tuple(
        map(canonical, cv.phalanxes)
    ):
        raise CvError("model phalanxes do not match the cross-validated pipeline")
    vectors = [cv.member_probs[repeat][m] for m in range(cv.member_probs.shape[1])]
    columns = [f"PX-{m + 1}" for m in range(len(vectors))]
    vectors.append(cv.probs[repeat])
    columns.append(cv.pipeline)
    if baseline is not None:
        vectors.append(baseline.probs[repeat])
        columns.append(baseline.pipeline)
    labels = dataset.labels
    actives = np.flatnonzero(labels == 1)
    rank_cols = [ranks(v)[actives] for v in vectors]
    ens = rank_cols[len(columns) - (2 if baseline is not None else 1)]
    order = np.lexsort((actives, ens))
    matrix = np.stack(rank_cols, axis=1)[order]
    return DiversityMap(columns, actives[order], matrix, [ave_p(v, labels) for v in vectors])

