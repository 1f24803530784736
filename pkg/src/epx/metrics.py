"""Ranking metrics for highly unbalanced two-class problems.

Observations are ranked by decreasing score. Where scores tie, every metric
here returns its exact expectation over uniformly random orderings inside
each tie block, so no Monte-Carlo noise enters downstream decisions.

For a tie block occupying ranks ``s+1 .. s+g`` that holds ``a`` actives with
``A`` actives ranked strictly above it, position ``s+q`` is active with
probability ``a/g``; given that it is, the other ``a-1`` block actives are
spread uniformly over the remaining ``g-1`` slots. Linearity of expectation
then gives the closed forms used below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeding import pmap, rng_for

DEFAULT_SHORTLIST = 300


class MetricError(ValueError):
    pass


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.shape != scores.shape:
        raise MetricError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if scores.size == 0:
        raise MetricError("empty input")
    if np.isnan(scores).any():
        raise MetricError("scores contain NaN")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    return scores, labels.astype(np.int64)


def _tie_blocks(scores, labels):
    """Per-position block statistics in ranked order.

    Returns (q, g, a, above) arrays of length N: within-block position
    (1-based), block size, actives in block, actives strictly above block.
    """
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    lab = labels[order]
    n = s.size
    new_block = np.empty(n, dtype=bool)
    new_block[0] = True
    new_block[1:] = s[1:] != s[:-1]
    starts = np.flatnonzero(new_block)
    sizes = np.diff(np.append(starts, n))
    block_of = np.cumsum(new_block) - 1
    actives = np.add.reduceat(lab, starts)
    above = np.concatenate(([0], np.cumsum(actives)[:-1]))
    q = np.arange(n) - starts[block_of] + 1
    return q, sizes[block_of], actives[block_of], above[block_of]


@dataclass(frozen=True)
class HitCurve:
    """Expected hits ``H(n)`` for ``n = 1..N`` (``hits[n-1]``)."""

    hits: np.ndarray = field(repr=False)
    n_obs: int
    n_active: int

    @property
    def precision(self) -> np.ndarray:
        return self.hits / np.arange(1, self.n_obs + 1)

    def at(self, n: int) -> float:
        return 0.0 if n == 0 else float(self.hits[n - 1])


def hit_curve(scores, labels) -> HitCurve:
    scores, labels = _check(scores, labels)
    if labels.sum() == 0:
        raise MetricError("hit curve needs at least one active")
    q, g, a, above = _tie_blocks(scores, labels)
    hits = above + a * q / g
    return HitCurve(hits.astype(np.float64), int(scores.size), int(labels.sum()))


def ave_p(scores, labels) -> float:
    """Average precision, the mean of ``H(t)/t`` over active positions ``t``.

    Ties are resolved by exact expectation over random within-block order.
    """
    scores, labels = _check(scores, labels)
    m = int(labels.sum())
    if m == 0:
        raise MetricError("AveP is undefined without actives")
    q, g, a, above = _tie_blocks(scores, labels)
    t = np.arange(1, scores.size + 1, dtype=np.float64)
    others = np.where(g > 1, (q - 1) * (a - 1) / np.maximum(g - 1, 1), 0.0)
    terms = (a / g) * (above + 1 + others) / t
    return float(terms.sum() / m)


def precision_at(scores, labels, n: int) -> float:
    curve = hit_curve(scores, labels)
    if not 1 <= n <= curve.n_obs:
        raise MetricError(f"shortlist size {n} outside 1..{curve.n_obs}")
    return curve.at(n) / n


def initial_enhancement(scores, labels, n: int = DEFAULT_SHORTLIST) -> float:
    """Precision at shortlist size ``n`` divided by the base rate ``M/N``."""
    curve = hit_curve(scores, labels)
    if not 1 <= n <= curve.n_obs:
        raise MetricError(f"shortlist size {n} outside 1..{curve.n_obs}")
    return (curve.at(n) / n) / (curve.n_active / curve.n_obs)


def ranks(scores) -> np.ndarray:
    """Rank 1 = highest score; tied scores share their expected (mean) rank."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    q, g, _, _ = _tie_blocks(scores, np.zeros(scores.size, dtype=np.int64))
    pos = np.arange(1, scores.size + 1, dtype=np.float64)
    expected = pos - q + (g + 1) / 2.0
    out = np.empty(scores.size)
    out[order] = expected
    return out


# ---------------------------------------------------------------------------
# Null calibration


@dataclass(frozen=True)
class NullCalibration:
    samples: np.ndarray = field(repr=False)
    a_median: float
    a_quantile: float
    alpha: float
    n_obs: int
    n_active: int
    seed: int

    @property
    def B(self) -> int:
        return int(self.samples.size)


def empirical_quantile(samples, alpha: float) -> float:
    """Order statistic at 1-based index ``ceil(alpha * B)``."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    k = max(1, math.ceil(alpha * xs.size - 1e-9))
    return float(xs[min(k, xs.size) - 1])


def random_ranking_avep(n_obs: int, n_active: int, rng: np.random.Generator) -> float:
    """AveP of one uniformly random untied ranking."""
    positions = np.sort(rng.choice(n_obs, size=n_active, replace=False)) + 1
    return float(np.mean(np.arange(1, n_active + 1) / positions))


def null_calibration(
    n_obs: int,
    n_active: int,
    B: int = 1000,
    alpha: float = 0.95,
    seed: int = 0,
    threads: int = 1,
) -> NullCalibration:
    """Reference distribution of AveP under random ranking.

    Sample ``b`` uses the stream ``mix(seed, b)``, so any prefix of samples
    is shared between runs with different ``B``.
    """
    if not 1 <= n_active < n_obs:
        raise MetricError(f"need 1 <= n_active < n_obs, got n_active={n_active}, n_obs={n_obs}")
    if B < 1:
        raise MetricError("B must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise MetricError("alpha must lie in (0, 1)")

    def one(b: int) -> float:
        return random_ranking_avep(n_obs, n_active, rng_for(seed, b))

    samples = np.array(pmap(one, range(B), threads))
    samples.setflags(write=False)
    return NullCalibration(
        samples=samples,
        a_median=empirical_quantile(samples, 0.5),
        a_quantile=empirical_quantile(samples, alpha),
        alpha=float(alpha),
        n_obs=int(n_obs),
        n_active=int(n_active),
        seed=int(seed),
    )
