"""11-point average precision against hand-computed fixtures."""

from fractions import Fraction

import numpy as np
import pytest

from convagg import average_precision, mean_ap
from convagg.evaluation import format_ap_table

from reference_impls import ap_11point_ref


def test_perfect_ranking():
    scores = [0.9, 0.8, 0.7, 0.2, 0.1]
    rel = [1, 1, 1, 0, 0]
    assert average_precision(scores, rel) == pytest.approx(1.0)


def test_single_positive_ranked_last():
    # precision is 1/10 at the only achieving rank; every recall level
    # r in {0,...,1} sees max precision 0.1 -> AP = 0.1
    scores = list(range(10, 0, -1))
    rel = [0] * 9 + [1]
    assert average_precision(scores, rel) == pytest.approx(0.1)


def test_three_item_fixture():
    # ranks: hit, miss, hit -> precisions (1, 1/2, 2/3), recalls (.5, .5, 1)
    # r<=0.5 -> max prec 1 (6 levels); r>0.5 -> 2/3 (5 levels)
    want = float((Fraction(6) + 5 * Fraction(2, 3)) / 11)
    got = average_precision([0.9, 0.8, 0.7], [1, 0, 1])
    assert got == pytest.approx(want)
    assert got == pytest.approx(ap_11point_ref([0.9, 0.8, 0.7], [1, 0, 1]))


def test_tie_broken_by_original_index():
    # equal scores: earlier item ranks first, so relevance order differs
    first_wins = average_precision([0.5, 0.5], [1, 0])
    second = average_precision([0.5, 0.5], [0, 1])
    assert first_wins == pytest.approx(1.0)
    assert second == pytest.approx(float((Fraction(11, 2)) / 11))


def test_interleaved_fixture():
    scores = [0.9, 0.85, 0.8, 0.75, 0.7, 0.65]
    rel = [1, 0, 1, 0, 0, 1]
    # precisions at hits: 1, 2/3, 3/6; recalls 1/3, 2/3, 1
    want = float((4 * Fraction(1) + 3 * Fraction(2, 3) + 4 * Fraction(1, 2)) / 11)
    assert average_precision(scores, rel) == pytest.approx(want)
    assert average_precision(scores, rel) == pytest.approx(ap_11point_ref(scores, rel))


def test_matches_reference_on_random_rankings():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        scores = rng.normal(size=n)
        rel = rng.integers(0, 2, size=n)
        if rel.sum() == 0:
            rel[int(rng.integers(0, n))] = 1
        assert average_precision(scores, rel) == pytest.approx(
            ap_11point_ref(scores.tolist(), rel.tolist())
        )


def test_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=25)
    rel = rng.integers(0, 2, size=25)
    rel[0] = 1
    base = average_precision(scores, rel)
    assert average_precision(3 * scores + 7, rel) == pytest.approx(base)
    assert average_precision(np.exp(scores), rel) == pytest.approx(base)


def test_swap_with_higher_negative_never_helps():
    scores = np.array([0.9, 0.8, 0.7, 0.6])
    rel = [0, 1, 1, 0]
    worse = average_precision(scores, rel)
    better = average_precision(scores, [1, 0, 1, 0])
    assert better >= worse


def test_all_points_variant():
    got = average_precision([0.9, 0.8, 0.7], [1, 0, 1], interpolation="all_points")
    assert got == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)


def test_no_positives_rejected():
    with pytest.raises(ValueError):
        average_precision([0.5, 0.4], [0, 0])


def test_mean_ap():
    assert mean_ap([1.0]) == pytest.approx(1.0)
    assert mean_ap([0.2, 0.4]) == pytest.approx(0.3)
    rng = np.random.default_rng(2)
    vals = rng.uniform(size=20)
    assert mean_ap(vals) == pytest.approx(vals.sum() / 20, abs=1e-12)
    with pytest.raises(ValueError):
        mean_ap([])


def test_table_format():
    table = format_ap_table(["cat", "dog"], [0.5, 0.7])
    lines = table.strip().splitlines()
    assert lines[0] == "cat\t0.500000"
    assert lines[-1] == "mAP\t0.600000"
