import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from georeason.geometry import BBox
from georeason.matching import linear_assignment, max_weight_matching
from georeason.parser import StructuredOutput, render_output
from georeason.reward import (
    MatchingMode, RewardBreakdown, accuracy_reward, count_reward, format_reward, iou_matrix,
    total_reward,
)

import oracles

MAX, HUN = MatchingMode.PER_GT_MAX, MatchingMode.HUNGARIAN
A = BBox(0, 0, 10, 10)
FAR = BBox(100, 100, 110, 110)
SHIFT = BBox(5, 0, 15, 10)


def out(*boxes, think="t"):
    return render_output(StructuredOutput(think, boxes))


def test_linear_assignment_small():
    cost = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
    pairs = linear_assignment(cost)
    assert sum(cost[i][j] for i, j in pairs) == 5
    assert linear_assignment(np.zeros((0, 3))) == []


@pytest.mark.parametrize("shape", [(1, 1), (2, 5), (5, 2), (6, 6), (7, 3)])
def test_matching_agrees_with_enumeration_and_scipy(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(30):
        w = rng.random(shape)
        pairs, total = max_weight_matching(w)
        assert len(pairs) == min(shape)
        assert len({j for _, j in pairs}) == len(pairs)
        r, c = linear_sum_assignment(-w)
        assert total == pytest.approx(w[r, c].sum(), abs=1e-12)
        if max(shape) <= 6:
            assert total == pytest.approx(oracles.best_assignment_total(w), abs=1e-12)


def test_matching_with_ties():
    w = np.ones((4, 4))
    _, total = max_weight_matching(w)
    assert total == 4.0


@pytest.mark.parametrize("pred, gt, mode, expected", [
    ([A], [A], MAX, 1.0),
    ([A], [A], HUN, 1.0),
    ([], [A], MAX, 0.0),
    ([], [A], HUN, 0.0),
    ([A, A], [A, FAR], MAX, 0.5),
    ([A, A], [A, FAR], HUN, 0.5),
    ([A], [A, SHIFT], MAX, 2 / 3),
    ([A], [A, SHIFT], HUN, 0.5),
    ([], [], MAX, 1.0),
    ([A], [], HUN, 0.0),
])
def test_accuracy_examples(pred, gt, mode, expected):
    assert accuracy_reward(pred, gt, mode) == pytest.approx(expected, abs=1e-15)


def test_accuracy_examples_against_brute_force():
    for pred, gt in [([A, A], [A, FAR]), ([A], [A, SHIFT])]:
        m = np.array([[oracles.box_area_iou(p.to_list(), g.to_list()) for g in gt] for p in pred])
        assert accuracy_reward(pred, gt, HUN) == pytest.approx(oracles.best_assignment_total(m) / len(gt))
        assert accuracy_reward(pred, gt, MAX) == pytest.approx(m.max(axis=0).mean())


box_st = st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 20), st.integers(1, 20)).map(
    lambda t: BBox(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@settings(max_examples=200, deadline=None)
@given(st.lists(box_st, max_size=5), st.lists(box_st, max_size=5), st.randoms())
def test_accuracy_properties(pred, gt, rnd):
    per_max = accuracy_reward(pred, gt, MAX)
    hung = accuracy_reward(pred, gt, HUN)
    assert 0.0 <= hung <= per_max + 1e-12 <= 1.0 + 1e-12
    shuffled = list(pred)
    rnd.shuffle(shuffled)
    assert accuracy_reward(shuffled, gt, MAX) == pytest.approx(per_max, abs=1e-12)
    assert accuracy_reward(shuffled, gt, HUN) == pytest.approx(hung, abs=1e-12)
    if gt:
        all_exact = all(any(p == g for p in pred) for g in gt)
        assert (per_max == 1.0) == all_exact


@pytest.mark.parametrize("k, j, expected", [
    (3, 3, 1.0), (0, 0, 1.0), (5, 0, 0.0), (1, 2, math.exp(-1)), (4, 2, math.exp(-2)),
    (0, 2, math.exp(-2)),
])
def test_count_examples(k, j, expected):
    assert count_reward(k, j) == pytest.approx(expected, abs=1e-15)
    assert count_reward(1, 2) == pytest.approx(0.367879, abs=1e-6)
    assert count_reward(4, 2) == pytest.approx(0.135335, abs=1e-6)


@given(st.integers(1, 50), st.integers(0, 60), st.integers(0, 60), st.integers(1, 5))
def test_count_properties(j, k1, k2, c):
    if abs(k1 - j) < abs(k2 - j):
        assert count_reward(k1, j) > count_reward(k2, j)
    assert count_reward(c * k1, c * j) == pytest.approx(count_reward(k1, j), rel=1e-12)


def test_count_rejects_negative():
    with pytest.raises(ValueError):
        count_reward(-1, 2)


def test_format_reward():
    r, parsed = format_reward(out(A))
    assert r == 1.0 and parsed.boxes == (A,)
    assert format_reward("<think>t</think><answer>[]") == (0.0, None)
    assert format_reward("") == (0.0, None)


def test_total_reward_examples():
    assert total_reward(out(A, FAR), [A, FAR]) == RewardBreakdown(1.0, 1.0, 1.0, 3.0)
    assert total_reward("garbage", [A]) == RewardBreakdown(0.0, 0.0, 0.0, 0.0)
    r = total_reward(out(), [A, FAR])
    assert (r.r_iou, r.r_count, r.r_format) == (0.0, pytest.approx(math.exp(-2)), 1.0)
    assert r.total == pytest.approx(1 + math.exp(-2))


def test_total_reward_without_format_gate():
    r = total_reward("garbage", [], format_gate=False)
    assert r == RewardBreakdown(1.0, 1.0, 0.0, 2.0)
    r = total_reward("garbage", [A], format_gate=False)
    assert r.r_format == 0.0 and r.r_count == pytest.approx(math.exp(-2))


@settings(max_examples=100, deadline=None)
@given(st.lists(box_st, max_size=4), st.lists(box_st, max_size=4), st.sampled_from([MAX, HUN]))
def test_total_reward_properties(pred, gt, mode):
    r = total_reward(out(*pred), gt, mode)
    assert r.total == r.r_iou + r.r_count + r.r_format
    assert 0.0 <= r.total <= 3.0
    assert r.total == pytest.approx(total_reward(out(*reversed(pred)), gt, mode).total, abs=1e-12)


def test_iou_matrix_shape():
    assert iou_matrix([], [A]).shape == (0, 1)
    assert iou_matrix([A, SHIFT], [A]).tolist() == [[1.0], [pytest.approx(1 / 3)]]


def test_random_hungarian_not_above_per_gt_max():
    rnd = random.Random(3)
    for _ in range(200):
        pred = [BBox(x, y, x + rnd.randint(1, 9), y + rnd.randint(1, 9))
                for x, y in ((rnd.randint(0, 20), rnd.randint(0, 20)) for _ in range(rnd.randint(0, 6)))]
        gt = [BBox(x, y, x + rnd.randint(1, 9), y + rnd.randint(1, 9))
              for x, y in ((rnd.randint(0, 20), rnd.randint(0, 20)) for _ in range(rnd.randint(1, 6)))]
        assert accuracy_reward(pred, gt, HUN) <= accuracy_reward(pred, gt, MAX) + 1e-12
