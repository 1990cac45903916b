import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelseg.aggregation import (
    aggre_loss,
    build_aggregation_features,
    fuse_instances,
    greedy_merge,
    score_map_analytic,
    score_map_oracle,
    singleton_groups,
)
from kernelseg.mining import Candidate
from oracles import literal_greedy_merge


def _cand(idx, F_n, k_n=1, shifted=(0, 0, 0), score=0.5, F_b=None):
    F_n = np.asarray(F_n, dtype=float)
    return Candidate(idx, np.zeros(3), np.asarray(shifted, float), 1, score, F_n,
                     np.zeros_like(F_n) if F_b is None else np.asarray(F_b, float), k_n, 0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 12), rounding=st.sampled_from([None, 1, 2]))
def test_greedy_merge_matches_literal_reference(seed, n, rounding):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n))
    scores = rng.random(n)
    if rounding is not None:
        A, scores = np.round(A, rounding), np.round(scores, rounding)
    A = 0.5 * (A + A.T)
    assert greedy_merge(A, scores).M_ins.tolist() == literal_greedy_merge(A, scores)


def test_all_zero_map_keeps_singletons():
    g = greedy_merge(np.zeros((4, 4)), np.ones(4))
    assert g.groups == [[0], [1], [2], [3]]


def test_two_candidates_merge_to_higher_score():
    A = np.array([[0, 0.9], [0.9, 0]])
    g = greedy_merge(A, [0.8, 0.6])
    assert g.groups == [[0, 1]] and g.centers == [0]
    g = greedy_merge(A, [0.6, 0.8])
    assert g.centers == [1]


def test_chain_merge_and_threshold():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 0.9
    A[1, 2] = A[2, 1] = 0.7
    assert greedy_merge(A, [0.1, 0.2, 0.3]).groups == [[0, 1, 2]]
    assert greedy_merge(A, [0.1, 0.2, 0.3], threshold=0.8).groups == [[0, 1], [2]]


def test_merge_validates():
    with pytest.raises(ValueError):
        greedy_merge(np.zeros((2, 2)), [1, 1], threshold=1.0)
    with pytest.raises(ValueError):
        greedy_merge(np.zeros((2, 2)), [1, 1, 1])


def test_fuse_weighted_mean():
    c = [_cand(0, np.ones(4), k_n=3, shifted=(1, 2, 3), score=0.9),
         _cand(1, 5 * np.ones(4), k_n=1, shifted=(9, 9, 9), score=0.1)]
    groups = greedy_merge(np.array([[0, 1.0], [1.0, 0]]), [0.9, 0.1])
    C, F = fuse_instances(groups, c)
    assert np.allclose(F, 2.0) and np.allclose(C, [[1, 2, 3]])
    C, F = fuse_instances(groups, c, mode="center")
    assert np.allclose(F, 1.0)


def test_fuse_singleton():
    c = [_cand(0, [1, 2], shifted=(4, 5, 6))]
    C, F = fuse_instances(singleton_groups(1), c)
    assert np.allclose(F, [[1, 2]]) and np.allclose(C, [[4, 5, 6]])


def test_oracle_map():
    c = [_cand(i, [0]) for i in range(4)]
    ids = np.array([0, 0, 1, -1])
    A = score_map_oracle(c, ids)
    assert A.tolist() == [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0]]


def test_analytic_map_closed_form():
    F = np.array([[0.0, 0.0], [1.0, 1.0]])
    A = score_map_analytic(F, beta0=4, beta1=2)
    assert math.isclose(A[0, 1], 0.5)
    assert math.isclose(A[0, 0], 1 / (1 + math.exp(-4)))
    with pytest.raises(ValueError):
        score_map_analytic(F, beta1=0)


def test_aggregation_features_layout():
    c = _cand(0, [1, 2], shifted=(7, 8, 9), F_b=[3, 4])
    assert build_aggregation_features([c]).tolist() == [[1, 2, 3, 4, 7, 8, 9]]


def test_aggre_loss_values():
    assert math.isclose(aggre_loss(np.full((3, 3), 0.5), np.eye(3)), math.log(2))
    A_hat = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], float)
    assert aggre_loss(A_hat, A_hat) <= 1e-6
    with pytest.raises(ValueError):
        aggre_loss(np.zeros((2, 2)), np.zeros((3, 3)))
