"""
Test the entropy estimator - slope fits, saturation, scaling, structural checks and claim evaluation
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to sys.path to import our modules
sys.path.insert(0, str(Path(__file__).parent))

import config
import metric_core
from data_models import EntropyReport, ExpectedOutcome, FiniteMetricSpace, Scenario, ScenarioBuild
from estimator import (
    bracket_check, check_growth_condition, covering_dimension, entropy_estimate, evaluate_claim,
    finiteness_bound, fit_growth_slope, growth_exponent, growth_slopes, plateau_check, same_partition
)
from exceptions import NegativeInputError, NotControllableError, WindowTooSmallError
from families import bowen_family, reindex_scale, synthetic_family
from scenarios import circle
from test_metric_core import random_plane_space

# On a 2^m-point circle the farthest-point radii are 1/2, 1/4, 1/4, 1/8 (x4), ...
# so with lambda_k = k ln2 / a the packing counts of e^{a lambda} d are exact powers of two.
GROWTH = 0.3
DOUBLING_GRID = [k * math.log(2.0) / GROWTH for k in range(8)]


def circle_sample(n: int) -> FiniteMetricSpace:
    model = circle()
    return model.to_space(model.grid(n))


def exponential_family(n: int = 512):
    """Uncapped synthetic family e^{0.3 lambda} d."""
    return synthetic_family(circle_sample(n), GROWTH, DOUBLING_GRID, cap=np.inf)


def fake_report(name: str, h: float) -> EntropyReport:
    return EntropyReport(family_name=name, base_kind='map', eps_grid=[0.1], per_eps=[], h_estimate=h)


def make_build(expected, checks=None, primary='f') -> ScenarioBuild:
    scenario = Scenario(name='fixture', manifold=None, family_builder='none', target_claim='fixture',
                        expected=expected, seed=0)
    space = FiniteMetricSpace(dist=np.zeros((1, 1)))
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=[0.1], builders={}, primary=primary,
                         checks=checks or {})


def test_fit_exact_exponential():
    """Counts {1, e, e^2, e^3} at lambda {0, 1, 2, 3} give slope 1 and no residual."""
    print("Testing fit_growth_slope...")

    slope, intercept, residual, window = fit_growth_slope([0, 1, 2, 3], np.exp([0.0, 1.0, 2.0, 3.0]))
    print(f"  slope={slope}, residual={residual}, window={window.tolist()}")
    assert abs(slope - 1.0) < 1e-9
    assert residual < 1e-9
    assert window.tolist() == [False, True, True, True]

    flat = fit_growth_slope([0, 1, 2, 3], [5, 5, 5, 5])
    assert flat[0] == 0.0 and flat[2] == 0.0
    print("  [OK] Exact slope")


def test_fit_window_widens_to_minimum():
    """A trailing share shorter than MIN_WINDOW_POINTS is widened, never shrunk below it."""
    print("Testing fit window widening...")

    lambdas = np.arange(10, dtype=float)
    counts = np.exp(0.5 * lambdas)
    assert int(fit_growth_slope(lambdas[:4], counts[:4])[3].sum()) == config.MIN_WINDOW_POINTS
    assert int(fit_growth_slope(lambdas, counts, fit_window_fraction=0.1)[3].sum()) == config.MIN_WINDOW_POINTS
    window = fit_growth_slope(lambdas, counts)[3]
    assert window.tolist() == [False] * 5 + [True] * 5
    full = fit_growth_slope(lambdas[:3], counts[:3], fit_window_fraction=0.1)[3]
    assert full.all()
    print("  [OK] Window widths")


def test_fit_window_too_small():
    with pytest.raises(WindowTooSmallError):
        fit_growth_slope([0.0, 1.0], [1, 2])
    family = synthetic_family(circle_sample(8), 0.1, [0.0, 1.0])
    with pytest.raises(WindowTooSmallError):
        entropy_estimate(family, [0.1])


def test_synthetic_growth_recovered():
    """h of e^{0.3 lambda} d on a circle sample is 0.3."""
    print("Testing the synthetic exponential family...")

    report = entropy_estimate(exponential_family(), [0.3, 0.15])

    for row in report.per_eps:
        print(f"  eps={row.epsilon}: counts={row.counts.tolist()} slope={row.slope:.6f}")
    assert report.per_eps[0].counts.tolist() == [2, 4, 8, 16, 32, 64, 128, 256]
    assert report.per_eps[1].counts.tolist() == [4, 8, 16, 32, 64, 128, 256, 512]
    assert abs(report.h_estimate - GROWTH) < 1e-9
    assert report.h_estimate <= GROWTH + 0.05
    assert not report.diagnostics['under_resolved']
    assert report.diagnostics['saturation_cap'] == 128
    print(f"  [OK] h_estimate={report.h_estimate:.6f}")


def test_growth_slopes_table():
    """Rows come back epsilon descending whatever order the grid is given in."""
    table = growth_slopes(exponential_family(), [0.15, 0.3])
    assert [row.epsilon for row in table] == [0.3, 0.15]
    assert table[0].counts.tolist() == [2, 4, 8, 16, 32, 64, 128, 256]
    assert all(abs(row.slope - GROWTH) < 1e-9 for row in table)
    assert not any(row.saturated or row.truncated for row in table)


def test_saturated_levels_are_excluded():
    """Only the prefix below ceil(n/4) enters the trailing window."""
    report = entropy_estimate(exponential_family(), [0.3])
    row = report.per_eps[0]
    # 128 is reached at k = 6, the window is the last 3 of k = 0..5
    assert row.in_window.tolist() == [False, False, False, True, True, True, False, False]
    assert not row.saturated


def test_capped_synthetic_meets_growth_condition():
    """The default cap at the sample diameter keeps d_lambda <= e^{a lambda} d."""
    space = circle_sample(512)
    family = synthetic_family(space, GROWTH, DOUBLING_GRID)
    m = covering_dimension(space, [0.1, 0.05, 0.02])
    assert check_growth_condition(family, GROWTH).passed
    assert growth_exponent(family) <= GROWTH + 1e-9
    report = entropy_estimate(family, [0.3, 0.15])
    print(f"  capped h_estimate={report.h_estimate:.4f}, bound={finiteness_bound(m, GROWTH):.4f}")
    assert report.diagnostics['sample_size'] == 512


def test_reindex_scales_estimate():
    """Reindexing by c divides every slope by c; counts and residuals are unchanged."""
    print("Testing reindex_scale on estimates...")

    family = exponential_family()
    base = entropy_estimate(family, [0.3, 0.15])
    for c in (3.0, 0.5, 1.0 / 3.0):
        scaled = entropy_estimate(reindex_scale(family, c), [0.3, 0.15])
        assert abs(scaled.h_estimate - base.h_estimate / c) < 1e-9
        for a, b in zip(base.per_eps, scaled.per_eps):
            assert np.array_equal(a.counts, b.counts)
            assert a.saturated == b.saturated
            assert abs(b.slope - a.slope / c) < 1e-9
            assert abs(b.residual - a.residual) < 1e-9
    print("  [OK] h(c) = h / c")


def test_half_sample_diagnostic():
    family = exponential_family()
    report = entropy_estimate(family, [0.3], half_family=family)
    assert report.diagnostics['half_sample_gap'] == 0.0


def test_cover_counts():
    family = exponential_family(64)
    report = entropy_estimate(family, [0.3, 0.15], count_kind='cover')
    assert report.count_kind == 'cover'
    for row in report.per_eps:
        expected = [metric_core.greedy_cover_count(family, row.epsilon, d_index=k) for k in range(family.n_levels)]
        assert row.counts.tolist() == expected


def test_finiteness_bound():
    assert finiteness_bound(2.0, 0.5) == 1.0
    assert finiteness_bound(0.0, 3.0) == 0.0
    with pytest.raises(NegativeInputError):
        finiteness_bound(-1.0, 0.5)
    with pytest.raises(NegativeInputError):
        finiteness_bound(1.0, -0.1)


def test_growth_condition_and_exponent():
    print("Testing the growth condition...")

    family = exponential_family(64)
    assert check_growth_condition(family, GROWTH).passed
    failed = check_growth_condition(family, 0.2)
    assert not failed.passed
    assert failed.worst_level == DOUBLING_GRID[-1]
    assert abs(growth_exponent(family) - GROWTH) < 1e-9

    # an isometry never grows
    model = circle()
    coords = model.grid(16)
    rotation = bowen_family(model.to_space(coords), (np.arange(16) + 5) % 16, 4)
    assert growth_exponent(rotation) == 0.0
    print("  [OK] a = 0.3 passes, a = 0.2 fails")


def test_covering_dimension_of_circle():
    """Greedy covers of a circle grow like 1/eps."""
    m = covering_dimension(circle_sample(512), [0.1, 0.05, 0.02])
    print(f"  m={m:.4f}")
    assert 0.9 <= m <= 1.1
    with pytest.raises(WindowTooSmallError):
        covering_dimension(circle_sample(8), [0.1])


def test_bracket_check_rows():
    print("Testing bracket_check...")

    rows = bracket_check(random_plane_space(4, 9), None, [0.1, 0.2, 0.4])
    assert len(rows) == 3
    assert all(row.holds and row.greedy_in_bracket for row in rows)

    family = exponential_family(8)
    rows = bracket_check(family, 2, [0.3, 0.6])
    assert all(row.holds for row in rows)
    print("  [OK] Bracket holds")


def test_plateau_check():
    print("Testing plateau_check...")

    space = circle_sample(8)
    constant = synthetic_family(space, 0.0, [0.0, 1.0, 2.0, 3.0])
    report = plateau_check(constant, space.dist, 0.5)
    assert report.pairs_checked == 28
    assert report.passed

    # an underestimated d_hat breaks the 2 d_hat bound for all but the nearest pairs
    strict = plateau_check(constant, space.dist / 4.0, 0.5)
    assert strict.pairs_passed == 8
    assert not strict.passed

    with pytest.raises(NotControllableError):
        plateau_check(constant, space.dist, 0.5, labels=[0] * 7 + [1])
    print("  [OK] Pass, fail and NotControllable")


def test_same_partition():
    assert same_partition([0, 0, 1], [5, 5, 2])
    assert not same_partition([0, 0, 1], [0, 1, 1])
    assert not same_partition([0, 1], [0, 0])
    assert not same_partition([0, 1], [0, 1, 2])


def test_evaluate_claim_kinds():
    print("Testing evaluate_claim...")

    interval = make_build(ExpectedOutcome('interval', low=0.6, high=0.78, target=math.log(2.0)))
    assert evaluate_claim(interval, {}, {'f': fake_report('f', 0.7)})['passed'] is True
    assert evaluate_claim(interval, {}, {'f': fake_report('f', 0.9)})['passed'] is False

    zero = make_build(ExpectedOutcome('zero_slope', tolerance=0.05))
    assert evaluate_claim(zero, {}, {'f': fake_report('f', 0.01)})['passed'] is True
    assert evaluate_claim(zero, {}, {'f': fake_report('f', 0.2)})['passed'] is False

    monotone = make_build(ExpectedOutcome('monotone_pair', tolerance=0.05, families=['lift', 'base']))
    reports = {'lift': fake_report('lift', 0.69), 'base': fake_report('base', 0.7)}
    assert evaluate_claim(monotone, {}, reports)['passed'] is True
    reports['lift'] = fake_report('lift', 0.5)
    assert evaluate_claim(monotone, {}, reports)['passed'] is False

    additivity = make_build(ExpectedOutcome('additivity_pair', tolerance=0.1,
                                            families=['product', 'doubling', 'rotation']))
    reports = {'product': fake_report('product', 0.7), 'doubling': fake_report('doubling', 0.69),
               'rotation': fake_report('rotation', 0.0)}
    result = evaluate_claim(additivity, {}, reports)
    assert result['passed'] is True
    assert abs(result['details']['gap'] - 0.01) < 1e-12

    family = exponential_family(16)
    equality = make_build(ExpectedOutcome('family_equality', tolerance=1e-9, families=['a', 'b']))
    same = {'a': reindex_scale(family, 2.0), 'b': reindex_scale(family, 2.0)}
    reports = {'a': fake_report('a', 0.15), 'b': fake_report('b', 0.15)}
    assert evaluate_claim(equality, same, reports)['passed'] is True
    different = {'a': reindex_scale(family, 2.0), 'b': reindex_scale(family, 3.0)}
    assert evaluate_claim(equality, different, reports)['passed'] is False
    print("  [OK] All claim kinds")


def test_zero_slope_needs_an_unsaturated_row():
    """Flat counts that sit at the saturation cap do not support a zero-slope claim."""
    print("Testing zero-slope claims on saturated rows...")

    flat = synthetic_family(circle_sample(8), 0.0, [0.0, 1.0, 2.0, 3.0], name='f')
    zero = make_build(ExpectedOutcome('zero_slope', tolerance=0.05))

    saturated = entropy_estimate(flat, [0.01])
    assert saturated.h_estimate == 0.0
    assert saturated.diagnostics['saturated_eps'] == [0.01]
    result = evaluate_claim(zero, {'f': flat}, {'f': saturated})
    assert result['passed'] is False
    assert result['details']['inconclusive'] == ['f']

    resolved = entropy_estimate(flat, [0.6, 0.01])
    assert resolved.diagnostics['saturated_eps'] == [0.01]
    assert evaluate_claim(zero, {'f': flat}, {'f': resolved})['passed'] is True
    print("  [OK] Saturated-only evidence rejected")


def test_evaluate_claim_checks_and_diagnostics():
    failing_check = make_build(ExpectedOutcome('zero_slope'), checks={'extra': lambda fams, reps: {'passed': False}})
    result = evaluate_claim(failing_check, {}, {'f': fake_report('f', 0.0)})
    assert result['passed'] is False
    assert result['checks']['extra'] == {'passed': False}

    diagnostic = evaluate_claim(make_build(None), {}, {'f': fake_report('f', 1.0)})
    assert diagnostic['passed'] is None
    assert diagnostic['kind'] is None


def main():
    """Run all estimator tests."""
    print("=" * 60)
    print("ESTIMATOR TESTS")
    print("=" * 60)

    try:
        test_fit_exact_exponential()
        test_fit_window_widens_to_minimum()
        test_fit_window_too_small()
        test_synthetic_growth_recovered()
        test_growth_slopes_table()
        test_saturated_levels_are_excluded()
        test_capped_synthetic_meets_growth_condition()
        test_reindex_scales_estimate()
        test_half_sample_diagnostic()
        test_cover_counts()
        test_finiteness_bound()
        test_growth_condition_and_exponent()
        test_covering_dimension_of_circle()
        test_bracket_check_rows()
        test_plateau_check()
        test_same_partition()
        test_evaluate_claim_kinds()
        test_zero_slope_needs_an_unsaturated_row()
        test_evaluate_claim_checks_and_diagnostics()

        print("\n" + "=" * 60)
        print("[SUCCESS] ALL ESTIMATOR TESTS PASSED!")
        print("=" * 60)

    except Exception as e:
        print(f"\n[FAIL] ESTIMATOR TEST FAILED: {e}")
        raise


if __name__ == "__main__":
    main()
