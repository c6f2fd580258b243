"""
Scenario registry.

Concrete model manifolds, maps, fields and control systems wired into
ready-to-run experiments. ``build_scenario(name, overrides)`` returns a
ScenarioBuild holding the sample, the family builders in dependency order,
the default epsilon grid and the scenario's extra checks.
"""

import math
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

import config
import metric_core
from curves import (
    ConcatenationCompletion, accessibility_partition, admissible_distance_matrix, build_admissible_graph,
    sample_bundles, subsample_bundles
)
from data_models import (
    AnchoredSystem, ControlNorm, DistanceFamily, ExpectedOutcome, FiniteMetricSpace, ManifoldModel,
    Scenario, ScenarioBuild
)
from estimator import plateau_check, same_partition
from exceptions import BadOverrideError, ConfigurationError, UnknownScenarioError
from families import bowen_family, curve_family, flow_family, product_family, reindex_scale
from logger import get_logger
from utils import parse_float_list

logger = get_logger(__name__)

GOLDEN_SLOPE = (math.sqrt(5.0) - 1.0) / 2.0

# Numeric overrides that must be strictly positive (everything numeric must be >= 0)
STRICTLY_POSITIVE = {'grid_size', 'n_curves', 'n_segments', 'dt', 'n_radii', 'n_probe', 'eps_link',
                     'r_probe', 'scale', 'per_band', 'n_bands', 'fiber_size'}


# =============================================================================
# Models
# =============================================================================

def circle(circumference: float = 1.0) -> ManifoldModel:
    return ManifoldModel(kind='torus', dimension=1, circumference=circumference)


def torus(dimension: int = 2, metric_norm: str = 'euclidean') -> ManifoldModel:
    return ManifoldModel(kind='torus', dimension=dimension, metric_norm=metric_norm)


def grid_index(coords: np.ndarray, manifold: ManifoldModel, per_axis: int) -> np.ndarray:
    """Flat (lexicographic) index of the nearest point of manifold.grid(per_axis)."""
    steps = np.round(np.asarray(coords, dtype=float) / manifold.circumference * per_axis).astype(int) % per_axis
    weights = per_axis ** np.arange(steps.shape[1] - 1, -1, -1)
    return steps @ weights


def snap_map(coords: np.ndarray, mapped: np.ndarray, manifold: ManifoldModel,
             per_axis: int) -> Tuple[np.ndarray, float]:
    """Index map of the grid sending each point to the grid point nearest its image."""
    images = grid_index(manifold.wrap(mapped), manifold, per_axis)
    displacement = float(manifold.distance(mapped, coords[images]).max()) if len(coords) else 0.0
    return images, displacement


def _constant_field(direction: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    direction = np.asarray(direction, dtype=float)
    return lambda points: np.broadcast_to(direction, np.shape(points)).copy()


def coordinate_system(manifold: ManifoldModel, norm: Optional[ControlNorm] = None) -> AnchoredSystem:
    """Generators d/dx_1 .. d/dx_n on a torus: full rank, controllable."""
    n = manifold.dimension
    generators = [_constant_field(np.eye(n)[i]) for i in range(n)]
    return AnchoredSystem(manifold=manifold, generators=generators,
                          control_norm=norm or ControlNorm.euclidean(n), label='coordinate')


def heisenberg_system(manifold: ManifoldModel, normalized: bool = True) -> AnchoredSystem:
    """X = d/dx, Y = d/dy + x d/dz on the 3-torus chart, x taken in [-c/2, c/2).

    With ``normalized`` Y is divided by sqrt(1 + x^2); the distribution is the
    same and the chart speed of a control u is then |u|.
    """
    c = manifold.circumference

    def x_field(points):
        out = np.zeros_like(points)
        out[:, 0] = 1.0
        return out

    def y_field(points):
        x = points[:, 0] - c * np.round(points[:, 0] / c)
        out = np.zeros_like(points)
        out[:, 1] = 1.0
        out[:, 2] = x
        if normalized:
            out /= np.sqrt(1.0 + x * x)[:, None]
        return out

    return AnchoredSystem(manifold=manifold, generators=[x_field, y_field], control_norm=ControlNorm.euclidean(2),
                          label='heisenberg' + ('' if normalized else '-raw'))


def line_field_system(manifold: ManifoldModel, direction: np.ndarray) -> AnchoredSystem:
    """One generator: the unit constant field along ``direction`` (a linear foliation)."""
    direction = np.asarray(direction, dtype=float)
    return AnchoredSystem(manifold=manifold, generators=[_constant_field(direction / np.linalg.norm(direction))],
                          control_norm=ControlNorm.euclidean(1), label='line-field')


def azimuthal_system(manifold: ManifoldModel) -> AnchoredSystem:
    """Rotation field about the z axis; leaves are latitude circles and the two poles."""

    def rotation(points):
        out = np.zeros_like(points)
        out[:, 0] = -points[:, 1]
        out[:, 1] = points[:, 0]
        return out

    return AnchoredSystem(manifold=manifold, generators=[rotation], control_norm=ControlNorm.euclidean(1),
                          label='azimuthal')


def bump(center: Tuple[float, float], power: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """phi^power with phi = sin^2(pi (x - x0)) + sin^2(pi (y - y0)); one zero on the 2-torus."""
    x0, y0 = center

    def value(points):
        phi = np.sin(np.pi * (points[:, 0] - x0)) ** 2 + np.sin(np.pi * (points[:, 1] - y0)) ** 2
        return phi ** power

    return value


def scaled_field(scalar: Callable[[np.ndarray], np.ndarray], direction: np.ndarray):
    direction = np.asarray(direction, dtype=float)
    return lambda points: scalar(points)[:, None] * direction[None, :]


def _radius_grid(params: Dict[str, Any]) -> np.ndarray:
    if params['r_max'] <= 0:
        return np.array([0.0])
    return np.linspace(0.0, params['r_max'], int(params['n_radii']))


# =============================================================================
# Map scenarios
# =============================================================================

def _map_doubling(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = circle()
    coords = manifold.grid(p['grid_size'])
    space = manifold.to_space(coords, name='circle')
    images, displacement = snap_map(coords, 2.0 * coords, manifold, p['grid_size'])
    scenario = Scenario(
        name='map_doubling', manifold=manifold, family_builder='bowen_family',
        target_claim='entropy of a map: the doubling map of the circle has h = ln 2',
        expected=ExpectedOutcome('interval', low=0.60, high=0.78, target=math.log(2.0)), seed=seed,
        parameters=p, description='Doubling map on a 2^k-point circle grid')
    builders = {'doubling': lambda fams, n_jobs: bowen_family(space, images, p['n_max'], name='doubling')}
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='doubling', notes={'snap_displacement': displacement})


def cat_map_images(coords: np.ndarray, manifold: ManifoldModel, per_axis: int) -> Tuple[np.ndarray, float]:
    x, y = coords[:, 0], coords[:, 1]
    mapped = np.stack([2.0 * x + y, x + y], axis=-1)
    return snap_map(coords, mapped, manifold, per_axis)


def _map_cat(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2, p['metric_norm'])
    coords = manifold.grid(p['grid_size'])
    space = manifold.to_space(coords, name='torus')
    images, displacement = cat_map_images(coords, manifold, p['grid_size'])
    target = math.log((3.0 + math.sqrt(5.0)) / 2.0)
    scenario = Scenario(
        name='map_cat', manifold=manifold, family_builder='bowen_family',
        target_claim='entropy of a map: the cat map [[2,1],[1,1]] has h = ln of its spectral radius',
        expected=ExpectedOutcome('interval', low=0.80, high=1.10, target=target), seed=seed, parameters=p,
        description='Arnold cat map on the rational N x N grid of the 2-torus')
    builders = {'cat': lambda fams, n_jobs: bowen_family(space, images, p['n_max'], name='cat')}
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='cat', notes={'snap_displacement': displacement})


def _map_rotation(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = circle()
    coords = manifold.grid(p['grid_size'])
    space = manifold.to_space(coords, name='circle')
    images, displacement = snap_map(coords, coords + p['shift'] / p['grid_size'], manifold, p['grid_size'])
    scenario = Scenario(
        name='map_rotation', manifold=manifold, family_builder='bowen_family',
        target_claim='entropy of a map: isometries have zero entropy',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Rotation of the circle grid by shift/N')
    builders = {'rotation': lambda fams, n_jobs: bowen_family(space, images, p['n_max'], name='rotation')}
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='rotation', notes={'snap_displacement': displacement})


def _flow_linear_torus(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2)
    coords = manifold.grid(p['grid_size'])
    space = manifold.to_space(coords, name='torus')
    field = _constant_field([1.0, p['alpha']])
    r_grid = _radius_grid(p)
    scenario = Scenario(
        name='flow_linear_torus', manifold=manifold, family_builder='flow_family',
        target_claim='entropy of a flow: a constant field on a flat torus has zero entropy',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Linear flow of irrational slope on the 2-torus')
    builders = {'flow': lambda fams, n_jobs: flow_family(space, field, r_grid, p['dt'], manifold, name='flow')}
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='flow')


# =============================================================================
# Curve-family scenarios
# =============================================================================

class CurveExperiment:
    """Shared pieces of a curve-family scenario: bundles, admissible graph and completion,
    built lazily once and reused by the full and half-sample families."""

    def __init__(self, system: AnchoredSystem, space: FiniteMetricSpace, r_grid: np.ndarray,
                 params: Dict[str, Any], seed: int, name: str, probe_scale: float = 1.0):
        self.system = system
        self.space = space
        self.r_grid = r_grid
        self.params = params
        self.seed = seed
        self.name = name
        self.probe_scale = probe_scale
        self._bundles = None
        self._graph = None
        self._completion = None

    def bundles(self, n_jobs: int = 1):
        if self._bundles is None:
            p = self.params
            self._bundles = sample_bundles(self.system, self.space.coords, self.r_grid, p['n_curves'],
                                           p['n_segments'], self.seed, n_jobs=n_jobs,
                                           length_filtered=p.get('length_filtered', False))
        return self._bundles

    def graph(self, n_jobs: int = 1):
        if self._graph is None:
            p = self.params
            self._graph = build_admissible_graph(
                self.system, self.space, p['r_probe'] * self.probe_scale, p['n_probe'], p['eps_link'], self.seed,
                p['n_segments'], n_jobs=n_jobs, gap_penalty=p['eps_link'] * self.probe_scale)
        return self._graph

    def completion(self, n_jobs: int = 1):
        if not self.params.get('completion', False):
            return None
        if self._completion is None:
            self._completion = ConcatenationCompletion(self.graph(n_jobs), self.r_grid)
        return self._completion

    def family(self, n_jobs: int = 1, half: bool = False) -> DistanceFamily:
        bundles = self.bundles(n_jobs)
        name = self.name
        if half:
            bundles = subsample_bundles(bundles, max(1, self.params['n_curves'] // 2))
            name = f"{self.name}_half"
        return curve_family(self.space, bundles, self.r_grid, self.system.manifold, self.completion(n_jobs),
                            n_jobs=n_jobs, seed=self.seed, name=name)

    def plateau(self, families: Dict[str, DistanceFamily], reports) -> Dict[str, Any]:
        graph = self.graph()
        if graph.n_classes > 1:
            return {'passed': False, 'reason': 'sample is not a single accessibility class',
                    'n_classes': graph.n_classes}
        d_hat, _ = admissible_distance_matrix(graph)
        report = plateau_check(families[self.name], d_hat, self.system.manifold.diameter,
                               labels=graph.labels, seed=self.seed)
        return report.to_dict()


def _curve_build(scenario: Scenario, experiment: CurveExperiment, eps_grid: List[float],
                 plateau: bool) -> ScenarioBuild:
    name = experiment.name
    builders = {name: lambda fams, n_jobs: experiment.family(n_jobs)}
    half = {name: lambda fams, n_jobs: experiment.family(n_jobs, half=True)}
    checks = {'plateau': experiment.plateau} if plateau else {}
    return ScenarioBuild(scenario=scenario, space=experiment.space, eps_grid=list(eps_grid), builders=builders,
                         primary=name, half_builders=half, checks=checks, extras={'experiment': experiment})


def _dist_full_rank(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2)
    space = manifold.to_space(manifold.grid(p['grid_size']), name='torus')
    system = coordinate_system(manifold)
    experiment = CurveExperiment(system, space, _radius_grid(p), p, seed, 'curves')
    scenario = Scenario(
        name='dist_full_rank', manifold=manifold, family_builder='curve_family',
        target_claim='a distribution with a single leaf equal to M has zero entropy (full rank case)',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Generators d/dx, d/dy on the 2-torus, Euclidean control norm')
    return _curve_build(scenario, experiment, p['eps_grid'], plateau=True)


def _dist_heisenberg(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(3)
    space = manifold.to_space(manifold.grid(p['grid_size']), name='torus3')
    system = heisenberg_system(manifold, normalized=p['normalized_generators'])
    experiment = CurveExperiment(system, space, _radius_grid(p), p, seed, 'curves')
    scenario = Scenario(
        name='dist_heisenberg', manifold=manifold, family_builder='curve_family',
        target_claim='a bracket-generating distribution (contact case) has zero entropy',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Heisenberg generators X = d/dx, Y = d/dy + x d/dz on a 3-torus chart')
    return _curve_build(scenario, experiment, p['eps_grid'], plateau=True)


def _fol_linear_torus(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2)
    space = manifold.to_space(manifold.grid(p['grid_size']), name='torus')
    system = line_field_system(manifold, [1.0, p['alpha']])
    experiment = CurveExperiment(system, space, _radius_grid(p), p, seed, 'curves')
    scenario = Scenario(
        name='fol_linear_torus', manifold=manifold, family_builder='curve_family',
        target_claim='a regular Riemannian foliation has zero geometric entropy',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Foliation of the 2-torus by lines of irrational slope')
    return _curve_build(scenario, experiment, p['eps_grid'], plateau=False)


def _fol_sphere_latitude(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = ManifoldModel(kind='sphere', radius=1.0)
    coords, bands = manifold.latitude_bands(p['n_bands'], p['per_band'], include_poles=True)
    space = manifold.to_space(coords, name='sphere')
    system = azimuthal_system(manifold)
    experiment = CurveExperiment(system, space, _radius_grid(p), p, seed, 'curves')
    scenario = Scenario(
        name='fol_sphere_latitude', manifold=manifold, family_builder='curve_family',
        target_claim='a singular Riemannian foliation has zero Finsler entropy',
        expected=ExpectedOutcome('zero_slope', tolerance=config.ZERO_SLOPE_TOL), seed=seed, parameters=p,
        description='Latitude circles of the round sphere with the poles as point leaves')
    build = _curve_build(scenario, experiment, p['eps_grid'], plateau=False)

    def partition(families, reports) -> Dict[str, Any]:
        labels = accessibility_partition(system, space, p['r_probe'], p['n_probe'], p['eps_link'], seed)
        return {'passed': same_partition(labels, bands), 'n_classes': len(set(labels)),
                'expected_classes': len(set(bands))}

    build.checks['partition'] = partition
    build.extras['band_labels'] = bands
    return build


def _scaled_finsler(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2)
    space = manifold.to_space(manifold.grid(p['grid_size']), name='torus')
    scale = float(p['scale'])
    system = coordinate_system(manifold)
    scaled = system.with_norm(system.control_norm.scaled(scale))
    r_grid = _radius_grid(p)
    base = CurveExperiment(system, space, r_grid, p, seed, 'base')
    stretched = CurveExperiment(scaled, space, r_grid * scale, p, seed, 'scaled', probe_scale=scale)
    scenario = Scenario(
        name='scaled_finsler', manifold=manifold, family_builder='curve_family',
        target_claim='scaling the Finsler norm by c divides the entropy by c',
        expected=ExpectedOutcome('family_equality', tolerance=1e-9, families=['scaled', 'reindexed']),
        seed=seed, parameters=p, description='Full-rank torus distribution with norm c*F against reindexing')
    builders = {
        'base': lambda fams, n_jobs: base.family(n_jobs),
        'scaled': lambda fams, n_jobs: stretched.family(n_jobs),
        'reindexed': lambda fams, n_jobs: reindex_scale(fams['base'], scale),
    }

    def scaling_law(families, reports) -> Dict[str, Any]:
        h_base, h_reindexed = reports['base'].h_estimate, reports['reindexed'].h_estimate
        gap = abs(h_reindexed - h_base / scale)
        return {'passed': gap <= 1e-9, 'h_base': h_base, 'h_reindexed': h_reindexed, 'gap': gap}

    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='scaled', checks={'scaling_law': scaling_law},
                         extras={'experiments': {'base': base, 'scaled': stretched}})


# =============================================================================
# Pairs
# =============================================================================

def _submersion_lift(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    base_manifold = circle()
    base_coords = base_manifold.grid(p['grid_size'])
    base_space = base_manifold.to_space(base_coords, name='circle')
    base_images, _ = snap_map(base_coords, 2.0 * base_coords, base_manifold, p['grid_size'])

    lift_manifold = torus(2)
    n_base, n_fiber = p['grid_size'], p['fiber_size']
    lift_coords = np.array([[i / n_base, j / n_fiber] for i in range(n_base) for j in range(n_fiber)])
    lift_space = lift_manifold.to_space(lift_coords, name='torus')
    lift_images = np.array([base_images[i] * n_fiber + j for i in range(n_base) for j in range(n_fiber)])
    projection = np.repeat(np.arange(n_base), n_fiber)

    scenario = Scenario(
        name='submersion_lift', manifold=lift_manifold, family_builder='bowen_family',
        target_claim='an isometric submersion cannot decrease entropy: h(lift) >= h(base)',
        expected=ExpectedOutcome('monotone_pair', tolerance=config.ZERO_SLOPE_TOL, families=['lift', 'base']),
        seed=seed, parameters=p, description='Doubling on the circle lifted to the 2-torus along a trivial fiber')
    builders = {
        'base': lambda fams, n_jobs: bowen_family(base_space, base_images, p['n_max'], name='base'),
        'lift': lambda fams, n_jobs: bowen_family(lift_space, lift_images, p['n_max'], name='lift'),
    }

    def count_monotonicity(families, reports) -> Dict[str, Any]:
        lift, base = families['lift'], families['base']
        failures = []
        for k in range(lift.n_levels):
            for epsilon in p['eps_grid']:
                lift_cover, _ = metric_core.exact_counts(lift, epsilon, config.EXACT_PAIR_LIMIT, d_index=k)
                base_cover, _ = metric_core.exact_counts(base, epsilon, config.EXACT_PAIR_LIMIT, d_index=k)
                if lift_cover < base_cover:
                    failures.append({'level': float(lift.lambda_grid[k]), 'epsilon': epsilon,
                                     'lift': lift_cover, 'base': base_cover})
        return {'passed': not failures, 'failures': failures}

    return ScenarioBuild(scenario=scenario, space=lift_space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='lift', checks={'count_monotonicity': count_monotonicity},
                         extras={'projection': projection, 'base_space': base_space})


def _product_pair(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = circle()
    first_coords = manifold.grid(p['grid_size'])
    first = manifold.to_space(first_coords, name='circle_a')
    first_images, _ = snap_map(first_coords, 2.0 * first_coords, manifold, p['grid_size'])
    second_coords = manifold.grid(p['rotation_size'])
    second = manifold.to_space(second_coords, name='circle_b')
    second_images, _ = snap_map(second_coords, second_coords + p['shift'] / p['rotation_size'], manifold,
                                p['rotation_size'])
    space = metric_core.max_combine(first, second, name='product')
    scenario = Scenario(
        name='product_pair', manifold=None, family_builder='product_family',
        target_claim='entropy is additive on products: h(f x g) = h(f) + h(g)',
        expected=ExpectedOutcome('additivity_pair', tolerance=config.ADDITIVITY_TOL,
                                 families=['product', 'doubling', 'rotation']),
        seed=seed, parameters=p, description='Doubling map times a rotation, max-combined')
    builders = {
        'doubling': lambda fams, n_jobs: bowen_family(first, first_images, p['n_max'], name='doubling'),
        'rotation': lambda fams, n_jobs: bowen_family(second, second_images, p['n_max'], name='rotation'),
        'product': lambda fams, n_jobs: product_family(fams['doubling'], fams['rotation'], name='product'),
    }
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='product')


def _sing_flow_pair(p: Dict[str, Any], seed: int) -> ScenarioBuild:
    manifold = torus(2)
    coords = manifold.grid(p['grid_size'])
    space = manifold.to_space(coords, name='torus')
    direction = np.array([1.0, p['alpha']])
    center = (p['zero_x'], p['zero_y'])
    phi, phi_squared = bump(center, 1), bump(center, 2)
    flow_grid = np.linspace(0.0, p['flow_r_max'], int(p['n_radii']))

    def anchored(scalar, name):
        system = AnchoredSystem(manifold=manifold, generators=[scaled_field(scalar, direction)],
                                control_norm=ControlNorm.euclidean(1), label=name)
        return CurveExperiment(system, space, _radius_grid(p), p, seed, name)

    experiments = {'anchored_phi': anchored(phi, 'anchored_phi'),
                   'anchored_phi_squared': anchored(phi_squared, 'anchored_phi_squared')}
    scenario = Scenario(
        name='sing_flow_pair', manifold=manifold, family_builder='flow_family+curve_family',
        target_claim='two weak Finsler metrics on one singular distribution (diagnostic only)',
        expected=None, seed=seed, parameters=p,
        description='phi*Z and phi^2*Z for a constant field Z and a bump phi with one zero')
    builders = {
        'flow_phi': lambda fams, n_jobs: flow_family(space, scaled_field(phi, direction), flow_grid, p['dt'],
                                                     manifold, name='flow_phi'),
        'flow_phi_squared': lambda fams, n_jobs: flow_family(space, scaled_field(phi_squared, direction),
                                                             flow_grid, p['dt'], manifold,
                                                             name='flow_phi_squared'),
        'anchored_phi': lambda fams, n_jobs: experiments['anchored_phi'].family(n_jobs),
        'anchored_phi_squared': lambda fams, n_jobs: experiments['anchored_phi_squared'].family(n_jobs),
    }
    return ScenarioBuild(scenario=scenario, space=space, eps_grid=list(p['eps_grid']), builders=builders,
                         primary='flow_phi', extras={'experiments': experiments})


# =============================================================================
# Registry
# =============================================================================

_CURVE_DEFAULTS = {
    'n_curves': config.N_CURVES,
    'n_segments': config.N_SEGMENTS,
    'n_radii': 9,
    'r_probe': config.R_PROBE,
    'n_probe': config.N_PROBE,
    'eps_link': config.EPS_LINK,
    'completion': True,
    'length_filtered': False,
}

REGISTRY: Dict[str, Tuple[Callable[[Dict[str, Any], int], ScenarioBuild], Dict[str, Any], int]] = {
    'map_doubling': (_map_doubling, {'grid_size': 1024, 'n_max': 10, 'eps_grid': [0.1, 0.05, 0.02]}, 11),
    'map_cat': (_map_cat, {'grid_size': 128, 'n_max': 8, 'eps_grid': [0.3, 0.2, 0.1],
                           'metric_norm': 'euclidean'}, 12),
    'map_rotation': (_map_rotation, {'grid_size': 256, 'n_max': 10, 'shift': 37,
                                     'eps_grid': [0.1, 0.05, 0.02]}, 13),
    'flow_linear_torus': (_flow_linear_torus, {'grid_size': 16, 'r_max': 10.0, 'n_radii': 11,
                                               'dt': config.FLOW_DT, 'alpha': GOLDEN_SLOPE,
                                               'eps_grid': [0.2, 0.1, 0.05]}, 14),
    'dist_full_rank': (_dist_full_rank, {**_CURVE_DEFAULTS, 'grid_size': 6, 'r_max': 4.0 * math.sqrt(2.0) / 2.0,
                                         'eps_grid': [0.5, 0.35, 0.25]}, 15),
    'dist_heisenberg': (_dist_heisenberg, {**_CURVE_DEFAULTS, 'grid_size': 3, 'r_max': 4.0 * math.sqrt(3.0) / 2.0,
                                           'normalized_generators': True, 'eps_grid': [1.0, 0.8, 0.6]}, 16),
    'fol_linear_torus': (_fol_linear_torus, {**_CURVE_DEFAULTS, 'grid_size': 8, 'n_curves': 16,
                                             'r_max': 4.0 * math.sqrt(2.0) / 2.0, 'alpha': GOLDEN_SLOPE,
                                             'completion': False, 'eps_grid': [0.8, 0.6, 0.3]}, 17),
    'fol_sphere_latitude': (_fol_sphere_latitude, {**_CURVE_DEFAULTS, 'n_bands': 6, 'per_band': 8, 'n_curves': 16,
                                                   'r_max': 2.0 * math.pi, 'r_probe': math.pi, 'n_probe': 16,
                                                   'completion': False, 'eps_grid': [3.0, 2.4, 0.6]}, 18),
    'submersion_lift': (_submersion_lift, {'grid_size': 8, 'fiber_size': 2, 'n_max': 3,
                                           'eps_grid': [0.3, 0.2, 0.1]}, 19),
    'product_pair': (_product_pair, {'grid_size': 512, 'rotation_size': 8, 'shift': 1, 'n_max': 8,
                                     'eps_grid': [0.1, 0.05, 0.02]}, 20),
    'scaled_finsler': (_scaled_finsler, {**_CURVE_DEFAULTS, 'grid_size': 4, 'n_curves': 16, 'n_radii': 5,
                                         'r_max': 4.0 * math.sqrt(2.0) / 2.0, 'scale': 2.0,
                                         'eps_grid': [1.2, 1.05, 0.6]}, 21),
    'sing_flow_pair': (_sing_flow_pair, {**_CURVE_DEFAULTS, 'grid_size': 8, 'n_curves': 8, 'n_radii': 5,
                                         'r_max': 4.0, 'flow_r_max': 4.0, 'dt': config.FLOW_DT,
                                         'alpha': GOLDEN_SLOPE, 'zero_x': 0.53, 'zero_y': 0.47,
                                         'completion': False, 'eps_grid': [0.3, 0.2, 0.12]}, 22),
}


def list_scenarios() -> List[Dict[str, Any]]:
    """Name, default seed and parameters of every registered scenario."""
    return [{'name': name, 'seed': seed, 'parameters': dict(defaults)}
            for name, (_, defaults, seed) in REGISTRY.items()]


def _coerce_override(scenario: str, key: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.strip().lower() not in ('true', 'false', 'yes', 'no', '1', '0'):
                    raise ValueError(f"not a boolean: {value!r}")
                return value.strip().lower() in ('true', 'yes', '1')
            return bool(value)
        if isinstance(default, list):
            values = parse_float_list(value, key)
            if not values or any(v <= 0 for v in values):
                raise ValueError("expected a non-empty list of positive numbers")
            return values
        if isinstance(default, int):
            number = float(value)
            if number != int(number):
                raise ValueError(f"expected an integer, got {value!r}")
            number = int(number)
        elif isinstance(default, float):
            number = float(value)
        else:
            return str(value)
    except (TypeError, ValueError, OverflowError, ConfigurationError) as e:
        raise BadOverrideError(scenario, key, str(e))
    if not math.isfinite(number) or number < 0 or (key in STRICTLY_POSITIVE and number <= 0):
        raise BadOverrideError(scenario, key, f"value {value!r} is out of range")
    return number


def scenario_parameters(name: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Defaults merged with validated overrides."""
    if name not in REGISTRY:
        raise UnknownScenarioError(name, sorted(REGISTRY))
    _, defaults, _ = REGISTRY[name]
    params = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise BadOverrideError(name, key, "known parameters: " + ", ".join(sorted(defaults)))
        params[key] = _coerce_override(name, key, value, defaults[key])
    if params.get('metric_norm', 'euclidean') not in ('euclidean', 'max'):
        raise BadOverrideError(name, 'metric_norm', "expected 'euclidean' or 'max'")
    if 'dt' in params and 'r_max' in params and 'n_radii' in params and name == 'flow_linear_torus':
        steps = np.linspace(0.0, params['r_max'], int(params['n_radii'])) / params['dt']
        if np.any(np.abs(steps - np.round(steps)) > 1e-6):
            raise BadOverrideError(name, 'dt', "dt must divide every grid value")
    return params


def build_scenario(name: str, overrides: Optional[Dict[str, Any]] = None,
                   seed: Optional[int] = None) -> ScenarioBuild:
    """Deterministic construction of a registered scenario."""
    params = scenario_parameters(name, overrides)
    factory, _, default_seed = REGISTRY[name]
    seed = default_seed if seed is None else int(seed)
    logger.info(f"Building scenario '{name}' (seed={seed})")
    return factory(params, seed)
