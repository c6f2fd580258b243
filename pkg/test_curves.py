"""
Test admissible curves - control sampling, quotient norms, length, reparametrization and the admissible graph
"""

import math
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add the project root to sys.path to import our modules
sys.path.insert(0, str(Path(__file__).parent))

import config
from curves import (
    ConcatenationCompletion, accessibility_partition, admissible_graph_distance, arc_length_reparametrize,
    build_admissible_graph, concatenate, control_library, curve_length, integrate_controls, load_bundle_csv,
    minkowski_check, quotient_norm, restrict_subcurve, running_length, sample_bounded_curves, sample_bundles,
    sample_length_bounded_curves, save_bundle_csv, subsample_bundles, time_grid, validate_control_norm
)
from data_models import AnchoredSystem, ControlNorm, Curve, ManifoldModel
from exceptions import (
    AsymmetricControlsError, BadIntervalError, ConfigurationError, DegenerateDirectionError, EndpointMismatchError,
    InvalidNormError, NegativeRadiusError, NotInRangeError, ZeroLengthError, exit_code_for
)
from scenarios import azimuthal_system, circle, coordinate_system, heisenberg_system, line_field_system, torus


def straight_curve(start, velocity, n_samples: int = 9) -> Curve:
    """Chart-straight curve with constant velocity on [0, 1]."""
    times = time_grid(n_samples)
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    points = start[None, :] + times[:, None] * velocity[None, :]
    controls = np.repeat(velocity[None, :], n_samples - 1, axis=0)
    return Curve(times=times, points=points, controls=controls, label='line')


def test_control_library_unit_ball():
    """Library controls lie in the unit ball; the first 2k are the extremal axes."""
    print("Testing the shared control library...")

    norm = ControlNorm.quadratic(np.array([[2.0, 0.5], [0.5, 1.0]]))
    library = control_library(norm, 12, 4, seed=7)

    assert library.shape == (12, 4, 2)
    assert np.all(norm(library) <= 1.0 + 1e-12)
    assert np.allclose(norm(library[:4]), 1.0)
    assert np.array_equal(library, control_library(norm, 12, 4, seed=7))
    assert not np.array_equal(library, control_library(norm, 12, 4, seed=8))
    print("  [OK] Unit ball, extremal controls, reproducible")


def test_control_library_radial_law():
    """Random controls have F(u)^k uniform on [0, 1], for a non-Euclidean norm too."""
    norm = ControlNorm.quadratic(np.array([[4.0, 1.0], [1.0, 1.0]]))
    library = control_library(norm, 204, 4, seed=3)
    radial = norm(library[4:]).ravel() ** 2
    print(f"  mean F(u)^2 over {radial.size} draws: {radial.mean():.4f}")
    assert np.all(radial <= 1.0 + 1e-12)
    assert abs(radial.mean() - 0.5) < 0.06
    assert abs(np.median(radial) - 0.5) < 0.08


def test_scaled_norm_halves_library():
    """Controls of 2F are exactly half of those of F."""
    norm = ControlNorm.euclidean(2)
    assert np.array_equal(control_library(norm.scaled(2.0), 10, 3, seed=1), control_library(norm, 10, 3, seed=1) / 2.0)


def test_validate_control_norm():
    validate_control_norm(ControlNorm.euclidean(3))
    with pytest.raises(InvalidNormError):
        validate_control_norm(ControlNorm.quadratic(np.array([[1.0, 0.0], [0.0, -1.0]])))
    with pytest.raises(InvalidNormError):
        validate_control_norm(ControlNorm.convex(lambda u: np.sum(u * u, axis=-1), 2, label='square'))


def test_sampled_curves_respect_speed_bound():
    print("Testing sample_bounded_curves...")

    system = coordinate_system(torus(2))
    bundle = sample_bounded_curves(system, np.array([0.2, 0.3]), 0.8, n_curves=10, n_segments=4, seed=2,
                                   n_samples=17)
    assert len(bundle) == 11
    assert bundle.curves[0].is_constant
    for curve in bundle.curves:
        assert np.allclose(curve.start, [0.2, 0.3])
        assert curve_length(curve, system) <= 0.8 + 1e-9

    with pytest.raises(NegativeRadiusError):
        sample_bounded_curves(system, np.array([0.2, 0.3]), -0.1)
    print("  [OK] Lengths bounded by r")


def test_length_bounded_curves():
    system = coordinate_system(torus(2))
    bundle = sample_length_bounded_curves(system, np.array([0.5, 0.5]), 0.6, n_curves=6, n_segments=3, seed=4,
                                          n_samples=33)
    for curve in bundle.curves[1:]:
        assert curve_length(curve, system) <= 0.6 + 1e-9


def test_bundles_are_nested_and_reproducible():
    system = coordinate_system(torus(2))
    coords = torus(2).grid(2)
    first = sample_bundles(system, coords, [0.0, 0.5, 1.0], n_curves=5, n_segments=2, seed=9, n_samples=9)
    second = sample_bundles(system, coords, [0.0, 0.5, 1.0], n_curves=5, n_segments=2, seed=9, n_samples=9,
                            n_jobs=2)
    assert len(first) == 3 and len(first[0]) == 4
    assert len(first[0][0]) == 1
    assert len(first[2][0]) == 6
    for k in range(3):
        for i in range(4):
            assert np.array_equal(first[k][i].stacked(), second[k][i].stacked())

    half = subsample_bundles(first, 2)
    assert len(half[2][0]) == 3


def test_zero_segments_is_a_config_error():
    system = coordinate_system(torus(2))
    with pytest.raises(ConfigurationError) as info:
        sample_bundles(system, torus(2).grid(2), [0.5], n_curves=3, n_segments=0)
    assert "n_segments" in str(info.value)
    assert exit_code_for(info.value) == config.EXIT_CONFIG_ERROR


def test_quotient_norm_closed_forms():
    """Euclidean anchor, quadratic norm, and the raw Heisenberg anchor off the singular set."""
    print("Testing quotient norms...")

    system = coordinate_system(torus(2))
    assert abs(quotient_norm(system, np.zeros(2), np.array([3.0, 4.0])) - 5.0) < 1e-12

    weighted = coordinate_system(torus(2), ControlNorm.quadratic(np.diag([4.0, 1.0])))
    assert abs(quotient_norm(weighted, np.zeros(2), np.array([1.0, 0.0])) - 2.0) < 1e-12

    # one generator along (1, 1): rescaled multiples only
    line = line_field_system(torus(2), [1.0, 1.0])
    assert abs(quotient_norm(line, np.zeros(2), np.array([1.0, 1.0])) - math.sqrt(2.0)) < 1e-12
    with pytest.raises(NotInRangeError):
        quotient_norm(line, np.zeros(2), np.array([1.0, 0.0]))

    raw = heisenberg_system(torus(3), normalized=False)
    point = np.array([0.2, 0.0, 0.0])
    assert abs(quotient_norm(raw, point, np.array([1.0, 1.0, 0.2])) - math.sqrt(2.0)) < 1e-9
    with pytest.raises(NotInRangeError):
        quotient_norm(raw, point, np.array([0.0, 0.0, 1.0]))
    print("  [OK] Closed forms reproduced")


def test_quotient_norm_redundant_generators():
    """Two copies of d/dx under the Euclidean norm: the cheapest split is u = (v/2, v/2)."""
    model = circle()
    field = lambda p: np.ones_like(p)
    system = AnchoredSystem(manifold=model, generators=[field, field], control_norm=ControlNorm.euclidean(2))
    assert abs(quotient_norm(system, np.zeros(1), np.array([1.0])) - 1.0 / math.sqrt(2.0)) < 1e-9

    l1 = ControlNorm.convex(lambda u: np.sum(np.abs(u), axis=-1) + 1e-3 * np.sqrt(np.sum(u * u, axis=-1)), 2)
    value = quotient_norm(system.with_norm(l1), np.zeros(1), np.array([1.0]))
    assert value <= 1.0 + 1e-3 * 1.0 + 1e-6


def test_raw_heisenberg_square_loop_holonomy():
    """Controls aX, aY, -aX, -aY for a quarter of the time each close up with z shifted by a^2 / 16."""
    print("Testing Heisenberg holonomy...")

    system = heisenberg_system(torus(3), normalized=False)
    a = 0.4
    controls = np.zeros((1, 4, 2))
    controls[0, 0] = [a, 0.0]
    controls[0, 1] = [0.0, a]
    controls[0, 2] = [-a, 0.0]
    controls[0, 3] = [0.0, -a]
    path = integrate_controls(system, np.zeros((1, 3)), controls)[0]

    end = path[-1]
    print(f"  End point: {end}")
    assert np.allclose(end[:2], 0.0, atol=1e-12)
    # the Y leg runs at x = a/4 for time 1/4 with speed a: z gains a^2/16
    assert abs(end[2] - a * a / 16.0) < 1e-12
    print("  [OK] Net z displacement a^2/16")


def test_concatenate_and_restrict():
    print("Testing concatenation and restriction...")

    model = torus(2)
    first = straight_curve([0.0, 0.0], [0.2, 0.0])
    second = straight_curve([0.2, 0.0], [0.0, 0.3])
    joined = concatenate(first, second, model)

    assert joined.n_samples == 17
    assert np.allclose(joined.end, [0.2, 0.3])
    system = coordinate_system(model)
    assert abs(curve_length(joined, system) - 0.5) < 1e-12

    with pytest.raises(EndpointMismatchError):
        concatenate(first, straight_curve([0.5, 0.5], [0.1, 0.0]), model)

    half = restrict_subcurve(first, 0.0, 0.5, model)
    assert np.allclose(half.end, [0.1, 0.0])
    assert abs(curve_length(half, system) - 0.1) < 1e-12
    with pytest.raises(BadIntervalError):
        restrict_subcurve(first, 0.5, 0.5)
    with pytest.raises(BadIntervalError):
        restrict_subcurve(first, -0.1, 0.5)
    print("  [OK] Lengths add, sub-intervals rescale")


def test_concatenate_across_the_seam():
    """b may start at a different lattice representative of a's end point."""
    model = torus(2)
    first = straight_curve([0.8, 0.0], [0.2, 0.0])
    second = straight_curve([0.0, 0.0], [0.1, 0.0])
    joined = concatenate(first, second, model)
    assert np.allclose(joined.end, [1.1, 0.0])


def test_arc_length_reparametrization():
    print("Testing arc length reparametrization...")

    model = torus(2)
    system = coordinate_system(model)
    times = time_grid(9)
    # speed 0.4 on the first half, 0.1 on the second
    controls = np.array([[0.4, 0.0]] * 4 + [[0.1, 0.0]] * 4)
    points = np.vstack([[0.0, 0.0], np.cumsum(controls / 8.0, axis=0)])
    curve = Curve(times=times, points=points, controls=controls)

    arc = arc_length_reparametrize(curve, system)
    length = curve_length(curve, system)
    assert abs(length - 0.25) < 1e-12
    assert np.allclose(arc.end, curve.end)
    assert abs(curve_length(arc, system) - length) < 1e-12
    assert np.allclose(np.linalg.norm(arc.controls, axis=-1), length)
    assert np.allclose(np.diff(running_length(arc, system)), length / 8.0)

    constant = Curve(times=times, points=np.zeros((9, 2)), controls=np.zeros((8, 2)))
    with pytest.raises(ZeroLengthError):
        arc_length_reparametrize(constant, system)
    print("  [OK] Constant speed, same length")


def test_length_from_finite_differences():
    """Without a control trace the speed is recovered from the chart velocity."""
    system = coordinate_system(torus(2))
    curve = straight_curve([0.1, 0.1], [0.3, 0.4])
    curve.controls = None
    assert abs(curve_length(curve, system) - 0.5) < 1e-9


def test_minkowski_check():
    print("Testing the Minkowski check...")

    assert minkowski_check(ControlNorm.euclidean(2)).passed
    assert minkowski_check(ControlNorm.quadratic(np.array([[3.0, 1.0], [1.0, 2.0]]))).passed
    l1 = ControlNorm.convex(lambda u: np.sum(np.abs(u), axis=-1), 2, label='l1')
    # F^2 is flat along the face u1, u2 > 0
    assert not minkowski_check(l1, sample_dirs=np.array([[1.0, 1.0]])).passed

    with pytest.raises(DegenerateDirectionError):
        minkowski_check(ControlNorm.euclidean(2), sample_dirs=np.array([[0.0, 0.0]]))
    print("  [OK] Euclidean passes, l1 fails on a face")


def test_admissible_graph_full_rank():
    print("Testing the admissible graph of a full-rank system...")

    model = torus(2)
    space = model.to_space(model.grid(4))
    system = coordinate_system(model)
    graph = build_admissible_graph(system, space, r_probe=0.6, n_probe=12, eps_link=0.05, seed=1, n_segments=2)

    assert graph.n_classes == 1
    assert np.allclose(graph.weights, graph.weights.T)
    same = admissible_graph_distance(graph, 3, 3)
    assert same.value == 0.0 and same.reachable and same.path == [3]

    # axis neighbours at distance 0.25: every edge costs at least d, the extremal controls at most d + one sample step
    neighbour = admissible_graph_distance(graph, 0, 1)
    assert neighbour.reachable
    assert neighbour.path[0] == 0 and neighbour.path[-1] == 1
    assert 0.25 - 1e-9 <= neighbour.value <= 0.25 + 0.6 / 64 + 1e-9
    print("  [OK] Single class, neighbour distance ~ 0.25")


def test_admissible_graph_unreachable_pairs():
    """A line field of slope 0 never links different rows of the grid."""
    model = torus(2)
    space = model.to_space(model.grid(3))
    system = line_field_system(model, [1.0, 0.0])
    graph = build_admissible_graph(system, space, r_probe=1.0, n_probe=4, eps_link=0.05, seed=0, n_segments=1)

    assert graph.n_classes == 3
    far = admissible_graph_distance(graph, 0, 1)
    assert not far.reachable and far.value == float('inf') and far.path == []
    assert admissible_graph_distance(graph, 0, 3).reachable


def test_asymmetric_controls_rejected():
    model = torus(2)
    system = coordinate_system(model)
    system.symmetric_controls = False
    with pytest.raises(AsymmetricControlsError):
        build_admissible_graph(system, model.to_space(model.grid(2)))


def test_sphere_accessibility_matches_latitudes():
    print("Testing accessibility classes on the sphere...")

    sphere = ManifoldModel(kind='sphere')
    coords, bands = sphere.latitude_bands(3, 6)
    labels = accessibility_partition(azimuthal_system(sphere), sphere.to_space(coords), r_probe=math.pi,
                                     n_probe=8, eps_link=0.1, seed=0)

    from estimator import same_partition
    assert same_partition(labels, bands)
    assert len(set(labels)) == 5
    print("  [OK] Three bands plus two poles")


def test_concatenation_completion_candidates():
    """Completion candidates start at y and reach x once r exceeds the path length."""
    model = torus(2)
    space = model.to_space(model.grid(4))
    system = coordinate_system(model)
    graph = build_admissible_graph(system, space, r_probe=0.6, n_probe=12, eps_link=0.05, seed=1, n_segments=2)
    completion = ConcatenationCompletion(graph, [0.0, 2.0], n_samples=17)

    assert completion(0, 0, 1, np.zeros((1, 17, 2))) is None
    gammas = np.repeat(space.coords[0][None, None, :], 17, axis=1)
    candidates = completion(1, 0, 1, gammas)
    assert candidates.shape == (1, 17, 2)
    assert np.allclose(candidates[0, 0], space.coords[1])
    assert float(model.distance(candidates[0, -1], space.coords[0])) < 1e-9


def test_bundle_csv_round_trip():
    system = coordinate_system(torus(2))
    bundle = sample_bounded_curves(system, np.array([0.1, 0.2]), 0.5, n_curves=3, n_segments=2, seed=0,
                                   n_samples=9)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_bundle_csv(bundle, str(Path(tmp) / "bundle.csv"))
        loaded = load_bundle_csv(str(path), 0, 0.5)
    assert len(loaded) == len(bundle)
    for original, restored in zip(bundle.curves, loaded.curves):
        assert np.array_equal(original.points, restored.points)
        assert np.array_equal(original.controls, restored.controls)


def main():
    """Run all curve tests."""
    print("=" * 60)
    print("ADMISSIBLE CURVE TESTS")
    print("=" * 60)

    try:
        test_control_library_unit_ball()
        test_control_library_radial_law()
        test_scaled_norm_halves_library()
        test_validate_control_norm()
        test_sampled_curves_respect_speed_bound()
        test_length_bounded_curves()
        test_bundles_are_nested_and_reproducible()
        test_zero_segments_is_a_config_error()
        test_quotient_norm_closed_forms()
        test_quotient_norm_redundant_generators()
        test_raw_heisenberg_square_loop_holonomy()
        test_concatenate_and_restrict()
        test_concatenate_across_the_seam()
        test_arc_length_reparametrization()
        test_length_from_finite_differences()
        test_minkowski_check()
        test_admissible_graph_full_rank()
        test_admissible_graph_unreachable_pairs()
        test_asymmetric_controls_rejected()
        test_sphere_accessibility_matches_latitudes()
        test_concatenation_completion_candidates()
        test_bundle_csv_round_trip()

        print("\n" + "=" * 60)
        print("[SUCCESS] ALL ADMISSIBLE CURVE TESTS PASSED!")
        print("=" * 60)

    except Exception as e:
        print(f"\n[FAIL] ADMISSIBLE CURVE TEST FAILED: {e}")
        raise


if __name__ == "__main__":
    main()
