import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from epx.dataset import BINARY, CONTINUOUS, SynthSpec, from_arrays, group_by_names, synth_generate
from epx.grouping import (
    GroupingError,
    cluster_groups,
    cut,
    jaccard_distance,
    jaccard_matrix,
    ward_cluster,
    ward_linkage,
    ward_objective,
)

from oracles import two_partitions


def hand_jaccard(xi, xj):
    both = sum(1 for a, b in zip(xi, xj) if a == 1 and b == 1)
    either = sum(1 for a, b in zip(xi, xj) if a == 1 or b == 1)
    return 1 - both / either


def two_blocks(within=0.1, between=0.9):
    D = np.full((6, 6), between)
    D[:3, :3] = within
    D[3:, 3:] = within
    np.fill_diagonal(D, 0.0)
    return D


def test_jaccard_examples():
    assert jaccard_distance([1, 0, 1], [1, 0, 1]) == 0
    assert jaccard_distance([1, 1, 0, 0], [0, 0, 1, 1]) == 1
    assert jaccard_distance([1, 1, 0], [1, 0, 1]) == pytest.approx(2 / 3)


def test_jaccard_all_three_observation_pairs():
    cols = [c for c in itertools.product((0, 1), repeat=3) if any(c)]
    for xi, xj in itertools.product(cols, repeat=2):
        assert jaccard_distance(xi, xj) == pytest.approx(hand_jaccard(xi, xj), abs=1e-15)
        assert jaccard_distance(xi, xj) == jaccard_distance(xj, xi)
    M = jaccard_matrix(np.array(cols).T)
    expected = np.array([[hand_jaccard(a, b) for b in cols] for a in cols])
    np.testing.assert_allclose(M, expected, atol=1e-15)


def test_jaccard_errors():
    with pytest.raises(GroupingError):
        jaccard_distance([0, 0], [0, 0])
    with pytest.raises(GroupingError):
        jaccard_distance([0, 2], [1, 0])
    with pytest.raises(GroupingError):
        jaccard_distance([0, 1], [1, 0, 1])


def test_trivial_cuts():
    D = two_blocks()
    assert ward_cluster(D, 6).groups == tuple((i,) for i in range(6))
    assert ward_cluster(D, 1).groups == (tuple(range(6)),)
    assert ward_cluster(D, 2).provenance == "clusters"
    with pytest.raises(GroupingError):
        ward_cluster(D, 0)
    with pytest.raises(GroupingError):
        ward_cluster(D, 7)


@pytest.mark.parametrize("squared", [False, True])
def test_two_blocks_match_exhaustive_search(squared):
    D = two_blocks()
    best = min(two_partitions(6), key=lambda p: ward_objective(D, p, squared))
    got = ward_cluster(D, 2, squared).groups
    assert {tuple(sorted(g)) for g in got} == {tuple(sorted(g)) for g in best}
    assert got == ((0, 1, 2), (3, 4, 5))


def random_dissimilarity(rng, n):
    X = rng.integers(0, 2, (40, n))
    X[0] = 1
    return jaccard_matrix(X)


@pytest.mark.parametrize("seed", range(10))
def test_squared_mode_matches_scipy_ward(seed):
    D = random_dissimilarity(np.random.default_rng(seed), 9)
    ours = ward_linkage(D, squared=True)
    ref = linkage(squareform(D, checks=False), method="ward")
    np.testing.assert_allclose([m[2] for m in ours.merges], ref[:, 2], rtol=1e-10)
    for k in range(1, 10):
        labels = fcluster(ref, k, criterion="maxclust")
        scipy_groups = sorted(sorted(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels))
        assert cut(ours, k) == scipy_groups


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31), st.data())
def test_cut_is_partition(n, seed, data):
    k = data.draw(st.integers(1, n))
    plan = ward_cluster(random_dissimilarity(np.random.default_rng(seed), n), k)
    flat = sorted(i for g in plan.groups for i in g)
    assert len(plan.groups) == k and flat == list(range(n))
    assert all(plan.groups)


def test_clustering_deterministic_under_ties():
    D = np.ones((5, 5)) - np.eye(5)
    a = ward_linkage(D)
    assert a == ward_linkage(D)
    # all distances tie: the lowest id pair merges first
    assert a.merges[0][:2] == (0, 1)


def test_ward_d_uses_raw_dissimilarities():
    D = two_blocks()
    plain = ward_linkage(D)
    squared = ward_linkage(D, squared=True)
    assert plain.merges[0][2] == pytest.approx(0.1)
    assert squared.merges[0][2] == pytest.approx(0.1)
    # the final merge height differs between the two conventions
    assert plain.merges[-1][2] != pytest.approx(squared.merges[-1][2])


def test_invalid_matrix():
    with pytest.raises(GroupingError):
        ward_linkage(np.array([[0, 1], [2, 0]]))
    with pytest.raises(GroupingError):
        ward_linkage(np.ones((3, 2)))


def test_cluster_groups_default_k():
    ds, truth = synth_generate(SynthSpec(n_obs=2000, n_noise=10, effect=0.0, base_rate=0.3), 0)
    plan = cluster_groups(ds)
    # k defaults to the number of name-based groups
    assert plan.d == group_by_names(ds).d
    assert plan.provenance == "clusters"


def test_cluster_groups_mixed_kinds():
    rng = np.random.default_rng(0)
    base = rng.integers(0, 2, (200, 1))
    flip = lambda: np.where(rng.random((200, 1)) < 0.05, 1 - base, base)
    other = rng.integers(0, 2, (200, 1))
    X = np.hstack([base, flip(), rng.normal(size=(200, 1)), other, flip(), rng.normal(size=(200, 1))])
    ds = from_arrays(X, [1] * 20 + [0] * 180, ["b1", "b2", "c1", "b3", "b4", "c2"])
    assert [c.kind for c in ds.columns] == [BINARY, BINARY, CONTINUOUS, BINARY, BINARY, CONTINUOUS]
    plan = cluster_groups(ds, k=2)
    assert plan.groups == ((0, 1, 4), (3,), (2,), (5,))
