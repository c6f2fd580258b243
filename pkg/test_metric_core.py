"""
Test metric spaces - validation, greedy and exhaustive counts, products and restriction
"""

import sys
import tempfile
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

# Add the project root to sys.path to import our modules
sys.path.insert(0, str(Path(__file__).parent))

import metric_core
from data_models import FiniteMetricSpace
from exceptions import (
    EmptySpaceError, EmptySubsetError, IndexOutOfRangeError, MetricValidationError, NegativeEntryError,
    NonFiniteEntryError, NonSquareMatrixError, TooLargeError
)
from scenarios import circle, torus
from utils import derive_rng, load_metric_csv, save_metric_csv


def make_space(matrix) -> FiniteMetricSpace:
    """Dense space from a nested list."""
    return FiniteMetricSpace(dist=np.asarray(matrix, dtype=float))


def random_plane_space(seed: int, n: int) -> FiniteMetricSpace:
    points = derive_rng(seed, n).random((n, 2))
    return make_space(np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1))


def brute_force_counts(space: FiniteMetricSpace, epsilon: float):
    """Minimum cover and maximum packing by trying every subset."""
    n = space.size
    d = space.matrix()
    cover = next(size for size in range(1, n + 1)
                 for centers in combinations(range(n), size)
                 if np.all((d[list(centers)] <= epsilon).any(axis=0)))
    packing = max(size for size in range(1, n + 1)
                  for subset in combinations(range(n), size)
                  if all(d[a, b] > epsilon for a, b in combinations(subset, 2)))
    return cover, packing


def test_valid_metric_passes():
    """Euclidean distances validate cleanly."""
    print("Testing validation of a Euclidean sample...")

    report = metric_core.validate_metric(random_plane_space(3, 9))

    assert report.ok
    assert report.mode == "full"
    assert report.violation_count == 0
    print("  [OK] No violations")


def test_triangle_violation_detected():
    """0 -> 2 via 1 is shorter than the direct entry."""
    print("Testing triangle violation...")

    report = metric_core.validate_metric(np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float))

    print(f"  Violations: {[str(v) for v in report.violations]}")
    assert not report.ok
    assert report.violation_count == 2
    assert {v.indices for v in report.violations} == {(0, 1, 2), (2, 1, 0)}
    assert all(v.kind == 'triangle' for v in report.violations)
    assert all(abs(v.excess - 1.0) < 1e-12 for v in report.violations)
    print("  [OK] Violation reported with excess 1")


def test_symmetry_and_diagonal_violations():
    print("Testing symmetry and diagonal checks...")

    asymmetric = metric_core.validate_metric(np.array([[0.0, 1.0], [2.0, 0.0]]))
    assert [v.kind for v in asymmetric.violations] == ['symmetry']
    assert asymmetric.violations[0].indices == (0, 1)

    diagonal = metric_core.validate_metric(np.array([[0.5, 1.0], [1.0, 0.0]]))
    assert any(v.kind == 'diagonal' and v.indices == (0,) for v in diagonal.violations)
    print("  [OK] Both reported")


def test_malformed_matrices_raise():
    print("Testing malformed matrices...")

    with pytest.raises(NonSquareMatrixError):
        metric_core.validate_metric(np.zeros((2, 3)))
    with pytest.raises(NegativeEntryError):
        metric_core.validate_metric(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(NonFiniteEntryError):
        metric_core.validate_metric(np.array([[0.0, np.nan], [np.nan, 0.0]]))
    print("  [OK] Errors raised")


def test_large_space_uses_sampled_check():
    print("Testing sampled validation of a 600-point circle...")

    model = circle()
    report = metric_core.validate_metric(model.to_space(model.grid(600)))

    assert report.mode == "sampled"
    assert report.ok
    print("  [OK] Sampled mode, no violations")


def test_require_metric_raises():
    from exceptions import MetricValidationError

    with pytest.raises(MetricValidationError):
        metric_core.require_metric(make_space([[0, 1, 3], [1, 0, 1], [3, 1, 0]]), "fixture")


def test_counts_single_and_pair():
    """A single point counts 1; two points at distance 1 split only below eps = 1."""
    print("Testing counts on tiny spaces...")

    single = make_space([[0.0]])
    assert metric_core.greedy_cover_count(single, 0.1) == 1
    assert metric_core.greedy_packing_count(single, 0.1) == 1
    assert metric_core.exact_counts(single, 0.1) == (1, 1)

    pair = make_space([[0.0, 1.0], [1.0, 0.0]])
    assert metric_core.greedy_cover_count(pair, 0.8) == 2
    assert metric_core.greedy_packing_count(pair, 0.8) == 2
    assert metric_core.exact_counts(pair, 0.8) == (2, 2)

    # balls are closed, separation is strict
    assert metric_core.greedy_cover_count(pair, 1.0) == 1
    assert metric_core.greedy_packing_count(pair, 1.0) == 1
    assert metric_core.exact_counts(pair, 1.0) == (1, 1)
    print("  [OK] Counts match")


def test_empty_space_raises():
    empty = FiniteMetricSpace(dist=np.zeros((0, 0)))
    with pytest.raises(EmptySpaceError):
        metric_core.greedy_cover_count(empty, 0.1)
    with pytest.raises(EmptySpaceError):
        metric_core.greedy_packing_count(empty, 0.1)
    with pytest.raises(EmptySpaceError):
        metric_core.exact_counts(empty, 0.1)


def test_exact_counts_against_brute_force():
    """Bitmask search agrees with subset enumeration, and greedy stays in the bracket."""
    print("Testing exact counts against brute force...")

    for index in range(12):
        space = random_plane_space(index, 2 + index % 7)
        for epsilon in (0.1, 0.25, 0.5):
            cover, packing = metric_core.exact_counts(space, epsilon)
            assert (cover, packing) == brute_force_counts(space, epsilon)
            cover_half, _ = metric_core.exact_counts(space, epsilon / 2.0)
            assert cover <= packing <= cover_half
            greedy = metric_core.greedy_packing_count(space, epsilon)
            assert cover <= greedy <= packing
            assert cover <= metric_core.greedy_cover_count(space, epsilon)
    print("  [OK] 36 cases agree")


def test_exact_counts_size_limit():
    with pytest.raises(TooLargeError):
        metric_core.exact_counts(random_plane_space(0, 13), 0.1)
    # an explicit limit admits the space
    cover, packing = metric_core.exact_counts(random_plane_space(0, 13), 0.5, size_limit=16)
    assert 1 <= cover <= packing <= 13


def test_packing_counts_single_traversal():
    """The grid version returns the same counts as one call per epsilon."""
    print("Testing greedy_packing_counts...")

    model = circle()
    space = model.to_space(model.grid(20))
    eps_grid = [0.3, 0.12, 0.05]
    counts, truncated = metric_core.greedy_packing_counts(space, eps_grid)

    expected = [metric_core.greedy_packing_count(space, e) for e in eps_grid]
    print(f"  counts={counts.tolist()}")
    assert counts.tolist() == expected
    assert not truncated.any()

    capped, capped_truncated = metric_core.greedy_packing_counts(space, [0.01], limit=5)
    assert capped.tolist() == [5]
    assert capped_truncated.tolist() == [True]
    print("  [OK] Counts and truncation flags")


def test_farthest_point_radii_nonincreasing():
    order, radii = metric_core.farthest_point_radii(random_plane_space(7, 10))
    assert order[0] == 0 and np.isinf(radii[0])
    assert len(set(order.tolist())) == len(order) == 10
    assert np.all(np.diff(radii[1:]) <= 1e-12)


def test_max_combine_indexing():
    """Point (i, j) sits at index i * n_b + j with the max distance."""
    print("Testing max_combine...")

    first = make_space([[0.0, 1.0], [1.0, 0.0]])
    model = circle()
    second = model.to_space(model.grid(3))
    product = metric_core.max_combine(first, second)

    assert product.size == 6
    assert product.labels[5] == "(1,2)"
    assert abs(product.distance(0, 5) - 1.0) < 1e-12
    assert abs(product.distance(1, 2) - 1.0 / 3.0) < 1e-12
    assert metric_core.validate_metric(product).ok
    print("  [OK] Indices and distances")


def test_max_combine_checks_factors():
    """A single-point factor gives an isometric copy; a broken factor is rejected."""
    model = circle()
    second = model.to_space(model.grid(5))
    product = metric_core.max_combine(make_space([[0.0]]), second)
    assert np.array_equal(product.matrix(), second.matrix())

    broken = make_space([[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    with pytest.raises(MetricValidationError):
        metric_core.max_combine(broken, second)
    with pytest.raises(MetricValidationError):
        metric_core.max_combine(second, broken)
    assert metric_core.max_combine(broken, second, validate=False).size == 15


def test_restrict():
    print("Testing restrict...")

    space = make_space([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
    sub = metric_core.restrict(space, [2, 0])
    assert sub.size == 2
    assert sub.labels == ['2', '0']
    assert sub.distance(0, 1) == 2.0

    with pytest.raises(EmptySubsetError):
        metric_core.restrict(space, [])
    with pytest.raises(IndexOutOfRangeError):
        metric_core.restrict(space, [0, 5])
    print("  [OK] Induced submetric")


def test_restriction_never_increases_counts():
    """Counts on a subset are bounded by the counts on the whole sample."""
    space = random_plane_space(5, 11)
    sub = metric_core.restrict(space, [0, 2, 4, 6, 8])
    for epsilon in (0.1, 0.3):
        assert metric_core.exact_counts(sub, epsilon)[1] <= metric_core.exact_counts(space, epsilon)[1]


def test_metric_csv_round_trip_is_exact():
    """save_metric_csv then load_metric_csv restores every entry bit for bit."""
    print("Testing metric CSV round trip...")

    model = torus(2)
    points = derive_rng(3, 20).random((20, 2))
    space = model.to_space(points, name='torus20')
    with tempfile.TemporaryDirectory() as tmp:
        path = save_metric_csv(space, str(Path(tmp) / 'torus20.csv'))
        loaded = load_metric_csv(str(path))

    assert loaded.labels == space.labels
    assert np.array_equal(loaded.matrix(), space.matrix())
    print("  [OK] Bitwise identical")


def main():
    """Run all metric space tests."""
    print("=" * 60)
    print("METRIC SPACE TESTS")
    print("=" * 60)

    try:
        test_valid_metric_passes()
        test_triangle_violation_detected()
        test_symmetry_and_diagonal_violations()
        test_malformed_matrices_raise()
        test_large_space_uses_sampled_check()
        test_require_metric_raises()
        test_counts_single_and_pair()
        test_empty_space_raises()
        test_exact_counts_against_brute_force()
        test_exact_counts_size_limit()
        test_packing_counts_single_traversal()
        test_farthest_point_radii_nonincreasing()
        test_max_combine_indexing()
        test_max_combine_checks_factors()
        test_restrict()
        test_restriction_never_increases_counts()
        test_metric_csv_round_trip_is_exact()

        print("\n" + "=" * 60)
        print("[SUCCESS] ALL METRIC SPACE TESTS PASSED!")
        print("=" * 60)

    except Exception as e:
        print(f"\n[FAIL] METRIC SPACE TEST FAILED: {e}")
        raise


if __name__ == "__main__":
    main()
