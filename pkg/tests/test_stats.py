"""Statistics against frozen reference fixtures plus structural properties."""
import json
import math
import random

import pytest

from dschecker import EvalError, SplitMix64, dunn_test, shapiro_wilk
from dschecker.errors import ErrorCode
from dschecker.stats import midranks

from conftest import FIXTURES, load_json

SHAPIRO = load_json(FIXTURES / "stats" / "shapiro.json")
DUNN = load_json(FIXTURES / "stats" / "dunn.json")


# --- SplitMix64 --------------------------------------------------------------


def test_splitmix64_reference_sequence():
    # First outputs for seed 0 and seed 1234567 from the published
    # splitmix64 recurrence; any conforming implementation must agree.
    assert [SplitMix64(0).next_u64() for _ in range(1)] == [0xE220A8397B1DCDAF]
    rng = SplitMix64(0)
    seq = [rng.next_u64() for _ in range(3)]
    assert seq == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]
    rng = SplitMix64(1234567)
    assert rng.next_u64() == 0x599ED017FB08FC85


def test_splitmix64_determinism_and_bounds():
    a = SplitMix64(42)
    b = SplitMix64(42)
    draws_a = [a.below(17) for _ in range(200)]
    draws_b = [b.below(17) for _ in range(200)]
    assert draws_a == draws_b
    assert all(0 <= d < 17 for d in draws_a)
    with pytest.raises(ValueError):
        a.below(0)


# --- Shapiro-Wilk ------------------------------------------------------------


@pytest.mark.parametrize("case", SHAPIRO["cases"], ids=lambda c: c["name"])
def test_shapiro_matches_reference(case):
    w, p = shapiro_wilk(case["values"])
    assert abs(w - case["W"]) <= 1e-6
    assert abs(p - case["p"]) <= 1e-6


def test_shapiro_exact_arcsine_at_n3():
    w, p = shapiro_wilk([-1.0, 0.0, 1.0])
    # Perfectly symmetric spacing maximizes W at n=3.
    assert w == pytest.approx(1.0, abs=1e-12)
    assert p == pytest.approx(1.0, abs=1e-9)
    w2, p2 = shapiro_wilk([0.0, 0.0, 1.0])
    expected = (6.0 / math.pi) * (math.asin(math.sqrt(w2)) - math.asin(math.sqrt(0.75)))
    assert p2 == pytest.approx(max(0.0, expected), abs=1e-12)


def test_shapiro_rejects_tiny_and_degenerate_samples():
    with pytest.raises(EvalError) as err:
        shapiro_wilk([1.0, 2.0])
    assert err.value.code is ErrorCode.SAMPLE_SIZE
    with pytest.raises(EvalError) as err:
        shapiro_wilk([5.0] * 10)
    assert err.value.code is ErrorCode.DEGENERATE_SAMPLE


def test_shapiro_is_location_and_scale_invariant():
    rng = random.Random(555)
    sample = [rng.gauss(0, 1) for _ in range(40)]
    w1, p1 = shapiro_wilk(sample)
    w2, p2 = shapiro_wilk([17.0 + 3.5 * v for v in sample])
    assert w1 == pytest.approx(w2, abs=1e-12)
    assert p1 == pytest.approx(p2, abs=1e-12)


def test_shapiro_statistic_in_unit_interval():
    rng = random.Random(77)
    for n in (3, 5, 11, 12, 30, 50):
        sample = [rng.uniform(0, 1) for _ in range(n)]
        w, p = shapiro_wilk(sample)
        assert 0.0 < w <= 1.0
        assert 0.0 <= p <= 1.0


# --- midranks ----------------------------------------------------------------


def test_midranks_without_ties():
    assert midranks([10.0, 30.0, 20.0]) == [1.0, 3.0, 2.0]


def test_midranks_with_ties_average_positions():
    assert midranks([1.0, 2.0, 2.0, 3.0]) == [1.0, 2.5, 2.5, 4.0]
    assert midranks([5.0, 5.0, 5.0]) == [2.0, 2.0, 2.0]


def test_midranks_always_sum_to_gauss_total():
    rng = random.Random(31)
    for _ in range(50):
        n = rng.randrange(1, 40)
        values = [float(rng.randrange(8)) for _ in range(n)]
        assert sum(midranks(values)) == pytest.approx(n * (n + 1) / 2)


# --- Dunn pairwise test ------------------------------------------------------


@pytest.mark.parametrize("case", DUNN["cases"], ids=lambda c: c["name"])
def test_dunn_matches_reference(case):
    rows = dunn_test(case["groups"], alpha=DUNN["alpha"])
    assert len(rows) == len(case["comparisons"])
    for mine, ref in zip(rows, case["comparisons"]):
        assert (mine.group_a, mine.group_b) == (ref["group_a"], ref["group_b"])
        assert abs(mine.z - ref["z"]) <= 1e-4
        assert abs(mine.p_raw - ref["p_raw"]) <= 1e-4
        assert abs(mine.p_adjusted - ref["p_adjusted"]) <= 1e-4
        assert mine.significant == ref["significant"]


def test_dunn_pair_count_and_symmetry():
    rng = random.Random(2024)
    groups = [[rng.gauss(mu, 1) for _ in range(8)] for mu in (0, 0.5, 1, 4)]
    rows = dunn_test(groups)
    assert len(rows) == 6  # k(k-1)/2 with k=4
    swapped = dunn_test([groups[1], groups[0]] + groups[2:])
    # Swapping two groups flips the sign of their z but not its size.
    assert rows[0].z == pytest.approx(-swapped[0].z, abs=1e-12)
    assert rows[0].p_adjusted == pytest.approx(swapped[0].p_adjusted, abs=1e-12)


def test_dunn_bonferroni_clamps_at_one():
    rng = random.Random(9)
    groups = [[rng.gauss(0, 1) for _ in range(6)] for _ in range(4)]
    rows = dunn_test(groups)
    for row in rows:
        assert row.p_adjusted == pytest.approx(min(1.0, row.p_raw * 6), abs=1e-15)
        assert 0.0 <= row.p_raw <= 1.0
        assert row.significant == (row.p_adjusted < 0.05)


def test_dunn_all_values_tied_yields_z_zero():
    rows = dunn_test([[3.0, 3.0], [3.0, 3.0, 3.0]])
    (row,) = rows
    assert row.z == 0.0
    assert row.p_adjusted == 1.0
    assert row.significant is False


def test_dunn_rejects_degenerate_group_sets():
    with pytest.raises(EvalError) as err:
        dunn_test([[1.0, 2.0]])
    assert err.value.code is ErrorCode.GROUP_TOO_SMALL
    with pytest.raises(EvalError) as err:
        dunn_test([[1.0], []])
    assert err.value.code is ErrorCode.GROUP_TOO_SMALL


def test_dunn_detects_separated_groups():
    rng = random.Random(808)
    low = [rng.gauss(0, 0.5) for _ in range(15)]
    high = [rng.gauss(10, 0.5) for _ in range(15)]
    (row,) = dunn_test([low, high])
    assert row.significant is True
    assert row.p_adjusted < 1e-4
