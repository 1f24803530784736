"""Phalanx formation: screen initial groups, merge, screen candidates.

Groups are canonical sorted tuples of column indices. All base-classifier
fits go through an evaluator and are cached by variable set, so each set is
fitted at most once per run; with ``d`` initial groups a run needs at most
``d**2`` fits. Within a stage all fits are independent and may run in
parallel; every decision is taken after the stage's fits complete.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from ._seeding import pmap
from .dataset import Dataset, GroupingPlan
from .forest import FORMATION_TREES, EvalRecord, ForestConfig, canonical, evaluate
from .metrics import NullCalibration, ave_p, null_calibration

log = logging.getLogger(__name__)

Group = tuple[int, ...]


class FormationError(RuntimeError):
    pass


class Evaluator(Protocol):
    """What formation needs from a base classifier.

    ``evaluate`` fits one model on a variable set; ``ensemble`` scores the
    average of two records' probabilities without fitting anything.
    """

    def evaluate(self, variable_set: Group) -> EvalRecord: ...

    def ensemble(self, rec_i: EvalRecord, rec_j: EvalRecord) -> float: ...


def ensemble_score(rec_i: EvalRecord, rec_j: EvalRecord, labels) -> float:
    """AveP of the averaged probabilities of two fitted models."""
    if rec_i.oob_probs.shape != rec_j.oob_probs.shape:
        raise FormationError(
            f"probability vectors differ in length: {rec_i.oob_probs.size} vs {rec_j.oob_probs.size}"
        )
    return ave_p((rec_i.oob_probs + rec_j.oob_probs) / 2.0, labels)


class ForestEvaluator:
    """Random-forest evaluator on one dataset.

    Every variable set is fitted with the same forest seed, so candidate
    sets are compared on common bootstrap samples.
    """

    def __init__(self, dataset: Dataset, config: ForestConfig):
        self.dataset = dataset
        self.config = config

    def evaluate(self, variable_set: Group) -> EvalRecord:
        return evaluate(self.dataset, variable_set, self.config)

    def ensemble(self, rec_i: EvalRecord, rec_j: EvalRecord) -> float:
        return ensemble_score(rec_i, rec_j, self.dataset.labels)


class EvalCache:
    """Variable-set keyed store of evaluation records with a fit counter."""

    def __init__(self, evaluator: Evaluator, threads: int = 1):
        self.evaluator = evaluator
        self.threads = threads
        self.fit_counter = 0
        self._records: dict[Group, EvalRecord] = {}
        self._ensembles: dict[tuple[Group, Group], float] = {}
        self._lock = threading.Lock()

    def __contains__(self, key) -> bool:
        return canonical(key) in self._records

    def __len__(self) -> int:
        return len(self._records)

    def keys(self) -> list[Group]:
        return list(self._records)

    def get(self, variable_set: Iterable[int]) -> EvalRecord:
        key = canonical(variable_set)
        if key not in self._records:
            self.warm([key])
        return self._records[key]

    def warm(self, sets: Iterable[Iterable[int]]) -> int:
        """Fit every missing set (in parallel); return the number of new fits."""
        missing = []
        for s in sets:
            key = canonical(s)
            if key not in self._records and key not in missing:
                missing.append(key)
        if not missing:
            return 0

        def run(key: Group) -> EvalRecord:
            try:
                return self.evaluator.evaluate(key)
            except Exception as exc:
                raise FormationError(f"evaluation failed for variable set {list(key)}: {exc}") from exc

        records = pmap(run, missing, self.threads)
        with self._lock:
            for key, rec in zip(missing, records):
                self._records[key] = rec
                self.fit_counter += 1
        return len(missing)

    def a(self, variable_set: Iterable[int]) -> float:
        return self.get(variable_set).assessment

    def a_bar(self, g_i: Group, g_j: Group) -> float:
        """Ensemble score of two groups; symmetric and cached."""
        key = (g_i, g_j) if g_i <= g_j else (g_j, g_i)
        if key not in self._ensembles:
            self._ensembles[key] = float(self.evaluator.ensemble(self.get(key[0]), self.get(key[1])))
        return self._ensembles[key]


def union(g_i: Group, g_j: Group) -> Group:
    return canonical(g_i + g_j)


@dataclass(frozen=True)
class FormationConfig:
    alpha: float = 0.95
    permutations: int = 1000
    formation_trees: int = FORMATION_TREES
    evaluator_seed: int = 0
    mtry: int | None = None
    min_node_size: int = 1

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1:
            raise FormationError("alpha must satisfy 0.5 <= alpha < 1")
        if self.permutations < 1:
            raise FormationError("permutations must be >= 1")
        if self.formation_trees < 1:
            raise FormationError("formation_trees must be >= 1")

    def forest_config(self) -> ForestConfig:
        return ForestConfig(
            n_trees=self.formation_trees,
            mtry=self.mtry,
            min_node_size=self.min_node_size,
            seed=self.evaluator_seed,
        )


# ---------------------------------------------------------------------------
# Screening


@dataclass
class GroupOutcome:
    group: Group
    a: float
    alone: bool
    combined: bool
    ensembled: bool
    combined_with: Group | None = None
    ensembled_with: Group | None = None
    fallback: bool = False
    a_union: dict[Group, float] = field(default_factory=dict)
    a_ensemble: dict[Group, float] = field(default_factory=dict)

    @property
    def survives(self) -> bool:
        return self.alone or self.combined or self.ensembled or self.fallback


@dataclass
class ScreeningReport:
    a_median: float
    a_quantile: float
    outcomes: list[GroupOutcome]
    union_test: bool = True

    @property
    def survivors(self) -> list[Group]:
        return [o.group for o in self.outcomes if o.survives]


def _screen(
    groups: Sequence[Group],
    cache: EvalCache,
    calib: NullCalibration,
    union_test: bool,
) -> ScreeningReport:
    groups = [canonical(g) for g in groups]
    cache.warm(groups)
    if union_test:
        cache.warm(union(groups[i], groups[j]) for i in range(len(groups)) for j in range(i + 1, len(groups)))
    a_half, a_alpha = calib.a_median, calib.a_quantile
    outcomes = []
    for i, g_i in enumerate(groups):
        a_i = cache.a(g_i)
        out = GroupOutcome(g_i, a_i, alone=a_i >= a_alpha, combined=False, ensembled=False)
        for j, g_j in enumerate(groups):
            if j == i:
                continue
            a_j = cache.a(g_j)
            if union_test:
                a_ij = cache.a(union(g_i, g_j))
                out.a_union[g_j] = a_ij
                if not out.combined and a_half + a_ij - a_j >= a_alpha:
                    out.combined, out.combined_with = True, g_j
            a_bar = cache.a_bar(g_i, g_j)
            out.a_ensemble[g_j] = a_bar
            if not out.ensembled and a_half + a_bar - a_j >= a_alpha:
                out.ensembled, out.ensembled_with = True, g_j
        outcomes.append(out)
    if not any(o.survives for o in outcomes):
        best = max(range(len(outcomes)), key=lambda k: (outcomes[k].a, -k))
        outcomes[best].fallback = True
        log.info("no group passed screening; keeping best group %s (a=%.4f)", list(outcomes[best].group), outcomes[best].a)
    return ScreeningReport(a_half, a_alpha, outcomes, union_test)


def screen_groups(groups: Sequence[Group], cache: EvalCache, calib: NullCalibration) -> tuple[list[Group], ScreeningReport]:
    """Keep a group if it is strong alone, in one model with another group,
    or averaged with another group. All singles and pair unions are fitted."""
    if not groups:
        raise FormationError("no groups to screen")
    report = _screen(groups, cache, calib, union_test=True)
    return report.survivors, report


def screen_phalanxes(candidates: Sequence[Group], cache: EvalCache, calib: NullCalibration) -> tuple[list[Group], ScreeningReport]:
    """Keep a candidate if strong alone or strong averaged with another candidate."""
    if not candidates:
        raise FormationError("no candidate phalanxes to screen")
    report = _screen(candidates, cache, calib, union_test=False)
    return report.survivors, report


# ---------------------------------------------------------------------------
# Hierarchical merging


@dataclass(frozen=True)
class MergeEvent:
    first: Group
    second: Group
    ratio: float
    merged: Group


@dataclass
class MergeTrace:
    events: list[MergeEvent]
    final_groups: list[Group]
    final_ratios: dict[tuple[Group, Group], float]


def _pair(g_i: Group, g_j: Group) -> tuple[Group, Group]:
    return (g_i, g_j) if g_i <= g_j else (g_j, g_i)


def merge_ratio(cache: EvalCache, g_i: Group, g_j: Group) -> float:
    """Ensemble score over single-model score for the pair."""
    return cache.a_bar(g_i, g_j) / cache.a(union(g_i, g_j))


def hierarchical_merge(survivors: Sequence[Group], cache: EvalCache) -> tuple[list[Group], MergeTrace]:
    """Greedily merge the pair with the smallest ratio while it is below 1.

    Ties in the ratio go to the lexicographically smallest pair of
    canonical group keys.
    """
    groups = [canonical(g) for g in survivors]
    if not groups:
        raise FormationError("nothing to merge")
    events: list[MergeEvent] = []
    while True:
        pairs = [_pair(groups[i], groups[j]) for i in range(len(groups)) for j in range(i + 1, len(groups))]
        cache.warm(groups)
        cache.warm(union(a, b) for a, b in pairs)
        ratios = {p: merge_ratio(cache, *p) for p in pairs}
        if not ratios:
            break
        best = min(ratios, key=lambda p: (ratios[p], p))
        if ratios[best] >= 1.0:
            break
        merged = union(*best)
        events.append(MergeEvent(best[0], best[1], ratios[best], merged))
        log.debug("merge %s + %s (ratio %.4f)", list(best[0]), list(best[1]), ratios[best])
        groups = [g for g in groups if g not in best] + [merged]
    final = {p: r for p, r in ratios.items()} if len(groups) > 1 else {}
    return groups, MergeTrace(events, list(groups), final)


# ---------------------------------------------------------------------------
# Orchestration


@dataclass
class FormationResult:
    phalanxes: list[Group]
    initial: list[Group]
    survivors: list[Group]
    candidates: list[Group]
    screening: ScreeningReport
    merge: MergeTrace
    phalanx_screening: ScreeningReport
    calibration: NullCalibration
    fit_counter: int

    @property
    def counts(self) -> dict[str, int]:
        return {
            "d": len(self.initial),
            "s": len(self.survivors),
            "c": len(self.candidates),
            "p": len(self.phalanxes),
        }


def run_formation(
    groups: Sequence[Group],
    evaluator: Evaluator,
    calib: NullCalibration,
    threads: int = 1,
) -> FormationResult:
    """The four-stage pipeline over any evaluator (real or mock)."""
    cache = EvalCache(evaluator, threads)
    initial = [canonical(g) for g in groups]
    survivors, screening = screen_groups(initial, cache, calib)
    candidates, trace = hierarchical_merge(survivors, cache)
    phalanxes, px_screening = screen_phalanxes(candidates, cache, calib)
    log.info(
        "formation: d=%d s=%d c=%d p=%d fits=%d",
        len(initial), len(survivors), len(candidates), len(phalanxes), cache.fit_counter,
    )
    return FormationResult(
        phalanxes=phalanxes,
        initial=initial,
        survivors=survivors,
        candidates=candidates,
        screening=screening,
        merge=trace,
        phalanx_screening=px_screening,
        calibration=calib,
        fit_counter=cache.fit_counter,
    )


def form_phalanxes(
    dataset: Dataset,
    plan: GroupingPlan,
    config: FormationConfig = FormationConfig(),
    threads: int = 1,
) -> FormationResult:
    plan.validate_for(dataset)
    calib = null_calibration(
        dataset.n_obs, dataset.n_active, config.permutations, config.alpha, config.evaluator_seed, threads
    )
    evaluator = ForestEvaluator(dataset, config.forest_config())
    return run_formation(plan.groups, evaluator, calib, threads)


def ratio_matrix(trace: MergeTrace) -> np.ndarray:
    """Terminal pairwise ratios as a square matrix over ``trace.final_groups`` (NaN diagonal)."""
    groups = trace.final_groups
    out = np.full((len(groups), len(groups)), np.nan)
    for i, g_i in enumerate(groups):
        for j, g_j in enumerate(groups):
            if i != j:
                out[i, j] = trace.final_ratios[_pair(g_i, g_j)]
    return out
