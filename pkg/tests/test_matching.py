import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelseg.matching import (
    Assignment,
    cost_matrix,
    dice_term,
    hungarian,
    instance_semantic_vote,
    iou,
    iou_matrix,
    mask_loss,
    match_instances,
    offset_loss,
    semantic_loss,
)
from oracles import brute_force_assignment


@settings(max_examples=80, deadline=None)
@given(r=st.integers(1, 6), c=st.integers(1, 6), seed=st.integers(0, 100_000))
def test_hungarian_optimal_against_enumeration(r, c, seed):
    cost = np.random.default_rng(seed).uniform(0, 5, size=(r, c))
    a = hungarian(cost)
    assert math.isclose(a.total_cost, brute_force_assignment(cost), abs_tol=1e-9)
    assert len(a.pairs) == min(r, c)
    assert len({p for p, _ in a.pairs}) == len({g for _, g in a.pairs}) == len(a.pairs)


def test_hungarian_rejects_nonfinite():
    with pytest.raises(ValueError):
        hungarian(np.array([[np.inf, 1.0]]))
    assert hungarian(np.zeros((0, 3))).pairs == []


def test_cost_matrix_penalty():
    C = cost_matrix([[0, 0, 0]], [1], [[3, 4, 0], [0, 0, 0]], [1, 2], mismatch_penalty=2.0)
    assert C.tolist() == [[5.0, 2.0]]
    with pytest.raises(ValueError):
        cost_matrix([[0, 0, 0]], [1], [[0, 0, 0]], [1], mismatch_penalty=-1)


def test_iou_values():
    a = np.array([1, 1, 0, 0], bool)
    b = np.array([0, 1, 1, 0], bool)
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(np.zeros(3, bool), np.zeros(3, bool)) == 0.0
    assert np.allclose(iou_matrix([a, b], [a]), [[1.0], [1 / 3]])


def test_semantic_vote():
    M = np.array([[0.9, 0.9, 0.9, 0.1], [0.1, 0.1, 0.1, 0.1]])
    labels, empty = instance_semantic_vote(M, np.array([2, 2, 1, 0]), 3)
    assert labels.tolist() == [2, 0] and empty.tolist() == [False, True]


def test_match_instances_reports_ious():
    gt = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], bool)
    M = np.array([[0.1, 0.1, 0.9, 0.9], [0.9, 0.9, 0.1, 0.1]])
    a = match_instances(M, gt, [[1, 0, 0], [0, 0, 0]], [1, 1], [[0, 0, 0], [1, 0, 0]], [1, 1])
    assert sorted(a.pairs) == [(0, 1), (1, 0)] and a.ious == [1.0, 1.0]


def test_dice_identities():
    m = np.array([1, 0, 1, 1.0])
    assert dice_term(m, m) == 0.0
    assert dice_term(m, 1 - m) == 1.0
    assert dice_term(np.zeros(3), np.zeros(3)) == 0.0


def test_mask_loss_gate():
    gt = np.array([[1, 1, 1, 1, 0, 0, 0, 0]], float)
    far = np.array([[0.9, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9]])  # IoU 1/8
    loss, n = mask_loss(far, gt, Assignment([(0, 0)]))
    assert (loss, n) == (0.0, 0)
    near = np.where(gt > 0, 0.9, 0.1)
    loss, n = mask_loss(near, gt, Assignment([(0, 0)]))
    expected = -math.log(0.9) + (1 - 2 * 3.6 / (4.0 + 4.0))
    assert n == 1 and loss == pytest.approx(expected)


def test_semantic_loss_closed_form():
    S = np.array([[0.9, 0.1], [0.2, 0.8]])
    ce = -(math.log(0.9) + math.log(0.8)) / 2
    dice = 1 - 2 * (0.9 + 0.8) / ((0.81 + 0.01 + 0.04 + 0.64) + 2)
    assert semantic_loss(S, np.array([0, 1])) == pytest.approx(ce + dice)


def test_offset_loss_values():
    O = np.array([[1.0, 0, 0], [0, 2, 0], [5, 5, 5]])
    T = np.array([[0.0, 1, 0], [0, 2, 0], [0, 0, 0]])
    mask = np.array([True, True, False])
    # first point: distance sqrt(2), 1 - cos = 1; second: exact
    assert offset_loss(O, T, mask) == pytest.approx((math.sqrt(2) + 1) / 2)
    assert offset_loss(O, O, np.ones(3, bool)) == 0.0
    assert offset_loss(O, T, np.zeros(3, bool)) == 0.0
