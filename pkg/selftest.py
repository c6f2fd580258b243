"""
Brute-force oracle suites behind the ``selftest`` subcommand.

Each suite compares a production routine against an exhaustive or closed-form
answer on small inputs: exact bracket counts on seeded random spaces, metric
validity of every family builder on coarse grids, and the quotient norm
against a dense grid search over the control fiber. Output lines are
deterministic for a given seed.
"""

import itertools
import math
from typing import Optional

import numpy as np

import metric_core
from curves import quotient_norm, sample_bundles
from data_models import (
    AnchoredSystem, ControlNorm, FiniteMetricSpace, ManifoldModel, PartialPointMap, SelftestResult, SuiteResult
)
from estimator import bracket_check
from exceptions import EntropyToolError, NotInRangeError
from families import (
    bowen_family, curve_family, flow_family, product_family, pseudogroup_family, synthetic_family,
    validate_family
)
from logger import get_logger
from scenarios import azimuthal_system, cat_map_images, circle, coordinate_system, heisenberg_system, snap_map, torus
from utils import derive_rng, load_metric_csv

logger = get_logger(__name__)

BRACKET_SPACES = 50
BRACKET_MAX_POINTS = 10
QUOTIENT_GRID_POINTS = 400001
QUOTIENT_TOL = 1e-4


def random_space(seed: int, index: int) -> FiniteMetricSpace:
    """Seeded Euclidean sample of 1..10 points in the unit square."""
    rng = derive_rng(seed, index)
    n = int(rng.integers(1, BRACKET_MAX_POINTS + 1))
    points = rng.random((n, 2))
    return FiniteMetricSpace(dist=np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1),
                             name=f"random{index}")


def bracket_suite(seed: int, n_spaces: int = BRACKET_SPACES) -> SuiteResult:
    suite = SuiteResult("bracket M(eps) <= N(eps) <= M(eps/2)")
    for index in range(n_spaces):
        space = random_space(seed, index)
        positive = space.dist[space.dist > 0]
        scale = float(positive.mean()) if positive.size else 1.0
        eps_grid = [0.25 * scale, 0.5 * scale, 1.0 * scale]
        for row in bracket_check(space, None, eps_grid):
            suite.cases += 1
            if not row.holds:
                suite.fail(f"space {index} (n={space.size}) eps={row.epsilon:.6f}: "
                           f"cover={row.cover} packing={row.packing} cover_half={row.cover_half}")
            elif not row.greedy_in_bracket:
                suite.fail(f"space {index} (n={space.size}) eps={row.epsilon:.6f}: "
                           f"greedy={row.greedy} outside [{row.cover}, {row.packing}]")
    return suite


def _check_family(suite: SuiteResult, label: str, build):
    suite.cases += 1
    try:
        family, base = build()
        summary = validate_family(family, base)
    except EntropyToolError as e:
        suite.fail(f"{label}: {e.error_kind}: {e.message}")
        return
    if not summary['valid']:
        suite.fail(f"{label}: violations per level {summary['levels']}, monotone={summary['monotone']}, "
                   f"base_matches={summary['base_matches']}")


def builder_suite(seed: int) -> SuiteResult:
    suite = SuiteResult("metric validity of family builders")

    # torus quotient metric against exhaustive lattice shifts
    for dimension in (1, 2, 3):
        model = torus(dimension)
        points = derive_rng(seed, 100, dimension).random((12, dimension)) * 3.0 - 1.0
        shifts = np.array(list(itertools.product((-4, -3, -2, -1, 0, 1, 2, 3, 4), repeat=dimension)), dtype=float)
        diff = points[:, None, None, :] - points[None, :, None, :] + shifts[None, None, :, :]
        expected = np.linalg.norm(diff, axis=-1).min(axis=-1)
        suite.cases += 1
        gap = float(np.abs(model.pairwise(points) - expected).max())
        if gap > 1e-12:
            suite.fail(f"torus dim {dimension}: quotient metric off by {gap:.3e}")

    sphere = ManifoldModel(kind='sphere')
    points = sphere.fibonacci(40)
    chord = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    suite.cases += 1
    gap = float(np.abs(sphere.pairwise(points) - 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))).max())
    if gap > 1e-12:
        suite.fail(f"sphere: great-circle metric off by {gap:.3e}")
    report = metric_core.validate_metric(sphere.to_space(points))
    suite.cases += 1
    if not report.ok:
        suite.fail(f"sphere sample: {report.violations[0]}")

    def doubling():
        model = circle()
        coords = model.grid(16)
        space = model.to_space(coords)
        images, _ = snap_map(coords, 2.0 * coords, model, 16)
        return bowen_family(space, images, 4), space

    def cat():
        model = torus(2)
        coords = model.grid(8)
        space = model.to_space(coords)
        images, _ = cat_map_images(coords, model, 8)
        return bowen_family(space, images, 3), space

    def pseudogroup():
        model = circle()
        space = model.to_space(model.grid(12))
        n = space.size
        identity = PartialPointMap('id', np.arange(n), 'id')
        step = PartialPointMap('s', (np.arange(n) + 1) % n, 's_inv')
        back = PartialPointMap('s_inv', (np.arange(n) - 1) % n, 's')
        return pseudogroup_family(space, [identity, step, back], 3), space

    def flow():
        model = torus(2)
        space = model.to_space(model.grid(4))
        field = lambda p: np.broadcast_to(np.array([1.0, (math.sqrt(5.0) - 1.0) / 2.0]), p.shape).copy()
        return flow_family(space, field, [0.0, 0.5, 1.0], 0.01, model), space

    def curves_full_rank():
        model = torus(2)
        space = model.to_space(model.grid(3))
        system = coordinate_system(model)
        r_grid = [0.0, 0.5, 1.0]
        bundles = sample_bundles(system, space.coords, r_grid, n_curves=6, n_segments=2, seed=seed, n_samples=17)
        return curve_family(space, bundles, r_grid, model, seed=seed), None

    def curves_heisenberg():
        model = torus(3)
        space = model.to_space(model.grid(2))
        system = heisenberg_system(model)
        r_grid = [0.0, 0.5, 1.0]
        bundles = sample_bundles(system, space.coords, r_grid, n_curves=6, n_segments=2, seed=seed, n_samples=17)
        return curve_family(space, bundles, r_grid, model, seed=seed), None

    def curves_sphere():
        model = ManifoldModel(kind='sphere')
        coords, _ = model.latitude_bands(2, 4)
        space = model.to_space(coords)
        system = azimuthal_system(model)
        r_grid = [0.0, 1.0, 2.0]
        bundles = sample_bundles(system, coords, r_grid, n_curves=4, n_segments=2, seed=seed, n_samples=17)
        return curve_family(space, bundles, r_grid, model, seed=seed), None

    def synthetic():
        model = circle()
        space = model.to_space(model.grid(10))
        return synthetic_family(space, 0.3, [0.0, 1.0, 2.0, 3.0]), None

    def product():
        first, _ = doubling()
        model = circle()
        coords = model.grid(4)
        images, _ = snap_map(coords, coords + 0.25, model, 4)
        second = bowen_family(model.to_space(coords), images, 4)
        return product_family(first, second), None

    for label, build in [('bowen doubling', doubling), ('bowen cat', cat), ('pseudogroup rotation', pseudogroup),
                         ('linear flow', flow), ('curves full rank', curves_full_rank),
                         ('curves heisenberg', curves_heisenberg), ('curves sphere', curves_sphere),
                         ('synthetic', synthetic), ('product', product)]:
        _check_family(suite, label, build)
    return suite


def _grid_minimum(norm: ControlNorm, u0: np.ndarray, direction: np.ndarray, half_width: float) -> float:
    s = np.linspace(-half_width, half_width, QUOTIENT_GRID_POINTS)
    return float(norm(u0[None, :] + s[:, None] * direction[None, :]).min())


def _constant_system(anchor: np.ndarray, norm: ControlNorm) -> AnchoredSystem:
    dimension = anchor.shape[0]
    model = torus(dimension)
    generators = [lambda p, _c=anchor[:, i].copy(): np.broadcast_to(_c, p.shape).copy()
                  for i in range(anchor.shape[1])]
    return AnchoredSystem(manifold=model, generators=generators, control_norm=norm)


def quotient_norm_suite(seed: int, n_cases: int = 12) -> SuiteResult:
    """Rank-deficient constant anchors (k = D + 1) so the fiber is a line."""
    suite = SuiteResult("quotient norm against grid search")
    quartic = ControlNorm.convex(lambda u: np.sum(u ** 4, axis=-1) ** 0.25, 3, label='l4')
    for index in range(n_cases):
        rng = derive_rng(seed, 200, index)
        anchor = rng.standard_normal((2, 3))
        v = rng.standard_normal(2)
        if index % 3 == 0:
            norm = ControlNorm.euclidean(3)
        elif index % 3 == 1:
            a = rng.standard_normal((3, 3))
            norm = ControlNorm.quadratic(a @ a.T + 0.5 * np.eye(3))
        else:
            norm = quartic
        system = _constant_system(anchor, norm)
        u0 = np.linalg.lstsq(anchor, v, rcond=None)[0]
        kernel = np.linalg.svd(anchor)[2][-1]
        expected = _grid_minimum(norm, u0, kernel, 8.0 * (1.0 + float(np.linalg.norm(u0))))
        suite.cases += 1
        try:
            value = quotient_norm(system, np.zeros(2), v)
        except EntropyToolError as e:
            suite.fail(f"case {index} ({norm.label}): {e.error_kind}: {e.message}")
            continue
        if abs(value - expected) > QUOTIENT_TOL * max(1.0, expected) or value > expected + 1e-7:
            suite.fail(f"case {index} ({norm.label}): quotient_norm={value:.8f} grid={expected:.8f}")

    # Heisenberg anchor at x = 0.2: X + Y has F = sqrt(2); the z direction is out of range
    system = heisenberg_system(torus(3), normalized=False)
    point = np.array([0.2, 0.0, 0.0])
    suite.cases += 1
    value = quotient_norm(system, point, np.array([1.0, 1.0, 0.2]))
    if abs(value - math.sqrt(2.0)) > 1e-9:
        suite.fail(f"heisenberg X+Y: {value:.12f} != sqrt(2)")
    suite.cases += 1
    try:
        quotient_norm(system, point, np.array([0.0, 0.0, 1.0]))
        suite.fail("heisenberg d/dz: expected NotInRange")
    except NotInRangeError:
        pass
    return suite


def fixture_suite(path: str) -> SuiteResult:
    """Metric validation of a user-supplied distance CSV."""
    suite = SuiteResult(f"fixture {path}")
    suite.cases += 1
    try:
        report = metric_core.validate_metric(load_metric_csv(path))
    except EntropyToolError as e:
        suite.fail(f"{e.error_kind}: {e}")
        return suite
    except (OSError, ValueError) as e:
        suite.fail(f"cannot read fixture: {e}")
        return suite
    for violation in report.violations:
        suite.fail(str(violation))
    if report.violation_count > len(report.violations):
        suite.fail(f"{report.violation_count} violation(s) in total")
    return suite


def run_selftest(seed: int = 0, fixture: Optional[str] = None) -> SelftestResult:
    """All oracle suites (plus the fixture check when a CSV is given)."""
    result = SelftestResult(seed=seed)
    result.suites.append(bracket_suite(seed))
    result.suites.append(builder_suite(seed))
    result.suites.append(quotient_norm_suite(seed))
    if fixture:
        result.suites.append(fixture_suite(fixture))
    logger.info(f"Self test {'passed' if result.passed else 'failed'} ({len(result.suites)} suite(s))")
    return result
