"""
Test the scenario claims end to end - cat map interval, controllable and foliated null
scenarios, product additivity and the length-filtered bundle equivalence
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to sys.path to import our modules
sys.path.insert(0, str(Path(__file__).parent))

from scenarios import build_scenario, torus
from test_scenarios import run_build

FAST_CURVES = {'n_curves': 4, 'n_radii': 3}


def assert_resolved_null(report, claim):
    """Zero slope backed by at least one unsaturated epsilon row."""
    print(f"  h_estimate={report.h_estimate}, saturated_eps={report.diagnostics['saturated_eps']}")
    assert report.h_estimate <= 0.05
    assert any(not row.saturated for row in report.per_eps)
    assert 'inconclusive' not in claim['details']
    assert claim['passed'] is True


def test_linear_foliation_levels_stay_at_twice_d():
    """Leafwise translations keep every level at 2d; the coarse epsilons stay below the cap."""
    print("Testing fol_linear_torus...")

    build = build_scenario('fol_linear_torus', FAST_CURVES)
    families, reports, claim = run_build(build)

    family, base = families['curves'], build.space.matrix()
    for k in range(family.n_levels):
        assert np.allclose(family.matrix(k), 2.0 * base, atol=1e-9)
    report = reports['curves']
    assert [row.saturated for row in report.per_eps] == [False, False, True]
    assert all(row.slope == 0.0 for row in report.per_eps if not row.saturated)
    assert_resolved_null(report, claim)
    print("  [OK] Constant family, resolved zero slope")


def test_sphere_foliation_partition_and_null():
    """Latitude circles: analytic band labels recovered exactly, zero slope on unsaturated rows."""
    print("Testing fol_sphere_latitude...")

    build = build_scenario('fol_sphere_latitude', FAST_CURVES)
    families, reports, claim = run_build(build)

    partition = claim['checks']['partition']
    print(f"  partition={partition}")
    assert partition['passed']
    assert partition['n_classes'] == partition['expected_classes'] == 8
    assert not reports['curves'].per_eps[0].saturated
    assert_resolved_null(reports['curves'], claim)
    print("  [OK] Leaves and zero slope")


def test_scaled_finsler_base_is_resolved():
    build = build_scenario('scaled_finsler', FAST_CURVES)
    families, reports, claim = run_build(build)
    assert not reports['base'].per_eps[0].saturated
    assert reports['base'].h_estimate == 0.0
    assert claim['checks']['scaling_law']['passed']
    assert claim['passed'] is True


def test_length_filtered_bundles_match_speed_bounded():
    """Curves of length <= r with warped speed give the same family as speed <= r, within 0.1 diam."""
    print("Testing length-filtered against speed-bounded bundles...")

    overrides = {'grid_size': 4, 'n_curves': 8, 'n_segments': 4, 'n_radii': 3, 'completion': False}
    speed = build_scenario('dist_full_rank', {**overrides, 'length_filtered': False}).builders['curves']({}, 1)
    length = build_scenario('dist_full_rank', {**overrides, 'length_filtered': True}).builders['curves']({}, 1)

    assert speed.size == length.size == 16
    gap = max(float(np.abs(speed.matrix(k) - length.matrix(k)).max()) for k in range(speed.n_levels))
    print(f"  max entrywise gap={gap:.3e}")
    assert gap <= 0.1 * torus(2).diameter
    print("  [OK] Families agree")


@pytest.mark.slow
def test_cat_map_defaults_in_interval():
    build = build_scenario('map_cat')
    _, reports, claim = run_build(build)
    h = reports['cat'].h_estimate
    print(f"  h_estimate={h:.4f} (ln of the golden ratio squared is 0.9624)")
    assert 0.80 <= h <= 1.10
    assert claim['passed'] is True


@pytest.mark.slow
@pytest.mark.parametrize('name', ['dist_full_rank', 'dist_heisenberg'])
def test_controllable_distributions_have_zero_entropy(name):
    """Zero slope and the d_r <= 2 d_M + 0.15 diam plateau on at least 95% of pairs."""
    print(f"Testing {name}...")

    build = build_scenario(name)
    _, reports, claim = run_build(build)

    plateau = claim['checks']['plateau']
    print(f"  plateau pass rate={plateau['pass_rate']:.3f} over {plateau['pairs_checked']} pairs")
    assert plateau['passed']
    assert plateau['pass_rate'] >= 0.95
    assert_resolved_null(reports['curves'], claim)


@pytest.mark.slow
@pytest.mark.parametrize('name', ['fol_linear_torus', 'fol_sphere_latitude'])
def test_foliations_at_defaults(name):
    build = build_scenario(name)
    _, reports, claim = run_build(build)
    assert_resolved_null(reports['curves'], claim)


@pytest.mark.slow
def test_product_is_additive():
    """h(doubling x rotation) = h(doubling) + h(rotation) within 0.1."""
    build = build_scenario('product_pair')
    _, reports, claim = run_build(build)
    h = {name: report.h_estimate for name, report in reports.items()}
    print(f"  h={h}")
    assert abs(h['product'] - h['doubling']) <= 0.1
    assert claim['details']['gap'] <= 0.1
    assert claim['passed'] is True


def main():
    """Run the quick acceptance tests (the slow ones run under pytest)."""
    print("=" * 60)
    print("ACCEPTANCE TESTS")
    print("=" * 60)

    try:
        test_linear_foliation_levels_stay_at_twice_d()
        test_sphere_foliation_partition_and_null()
        test_scaled_finsler_base_is_resolved()
        test_length_filtered_bundles_match_speed_bounded()

        print("\n" + "=" * 60)
        print("[SUCCESS] ALL ACCEPTANCE TESTS PASSED!")
        print("=" * 60)

    except Exception as e:
        print(f"\n[FAIL] ACCEPTANCE TEST FAILED: {e}")
        raise


if __name__ == "__main__":
    main()
