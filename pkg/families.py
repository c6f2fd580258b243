"""
Builders of increasing distance families {d_lambda}.

Bowen metrics of maps, pseudogroup metrics, flow metrics, the curve-set
metrics d_r = delta_r(x,y) + delta_r(y,x), plus the generic operations on
families (reindexing, restriction, products, persistence).
"""

import json
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path

import config
import metric_core
from data_models import (
    CurveBundle, Curve, DistanceFamily, FiniteMetricSpace, ManifoldModel, PartialPointMap
)
from exceptions import (
    BlowUpError, GridMismatchError, IndexOutOfRangeError, MetricValidationError,
    MissingConstantCurveError, MissingIdentityError, MissingInverseError,
    NonNestedBundlesError, NonPositiveScaleError
)
from logger import PerformanceTimer, get_logger
from utils import chunked, load_metric_csv, parallel_map, save_metric_csv, write_json

logger = get_logger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
CompletionProvider = Callable[[int, int, int, np.ndarray], Optional[np.ndarray]]


# =============================================================================
# Integration
# =============================================================================

def rk4_step(field: VectorField, points: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step for all points at once."""
    k1 = field(points)
    k2 = field(points + 0.5 * dt * k1)
    k3 = field(points + 0.5 * dt * k2)
    k4 = field(points + dt * k3)
    return points + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(field: VectorField, points: np.ndarray, dt: float, n_steps: int,
                   manifold: Optional[ManifoldModel] = None, where: str = "flow") -> np.ndarray:
    """Trajectory samples after every step: shape (n_steps + 1, n, D)."""
    current = np.array(points, dtype=float)
    trajectory = np.empty((n_steps + 1,) + current.shape)
    trajectory[0] = current
    for step in range(1, n_steps + 1):
        current = rk4_step(field, current, dt)
        if manifold is not None:
            current = manifold.retract(current)
            bounded = manifold.in_chart(current)
        else:
            bounded = bool(np.all(np.isfinite(current)))
        if not bounded:
            raise BlowUpError(where, step * dt)
        trajectory[step] = current
    return trajectory


def _steps_for_grid(grid: Sequence[float], dt: float) -> np.ndarray:
    steps = np.asarray(grid, dtype=float) / dt
    rounded = np.round(steps)
    if np.any(np.abs(steps - rounded) > 1e-6 * np.maximum(1.0, rounded)):
        raise GridMismatchError(f"dt={dt:g} does not divide every grid value {list(grid)}")
    return rounded.astype(int)


# =============================================================================
# Map, pseudogroup and flow families
# =============================================================================

def _check_images(images: np.ndarray, n: int, what: str):
    bad = (images < 0) | (images >= n)
    if bad.any():
        raise IndexOutOfRangeError(what, int(images[np.argmax(bad)]), n)


def bowen_family(space: FiniteMetricSpace, images: Sequence[int], n_max: int,
                 name: str = "bowen") -> DistanceFamily:
    """d_n(x, y) = max_{0<=i<=n} d(f^i x, f^i y) for an index map f on the sample."""
    images = np.asarray(images, dtype=int)
    n = space.size
    if len(images) != n:
        raise IndexOutOfRangeError("map", len(images), n)
    _check_images(images, n, "map")

    orbit = np.empty((n_max + 1, n), dtype=int)
    orbit[0] = np.arange(n)
    for step in range(1, n_max + 1):
        orbit[step] = images[orbit[step - 1]]

    grid = np.arange(n_max + 1, dtype=float)
    provenance = {'builder': 'bowen_family', 'n_max': n_max}
    logger.info(f"Building Bowen family '{name}': n={n}, n_max={n_max}")

    if space.is_dense:
        base = space.dist
        running = base.copy()
        matrices = [running.copy()]
        for step in range(1, n_max + 1):
            np.maximum(running, base[np.ix_(orbit[step], orbit[step])], out=running)
            matrices.append(running.copy())
        return DistanceFamily(lambda_grid=grid, base_kind='map', labels=space.labels, matrices=matrices,
                              coords=space.coords, tol=space.tol, name=name, provenance=provenance)

    def row(k: int, i: int) -> np.ndarray:
        out = space.row(i).copy()
        for step in range(1, k + 1):
            np.maximum(out, space.row(int(orbit[step, i]))[orbit[step]], out=out)
        return out

    return DistanceFamily(lambda_grid=grid, base_kind='map', labels=space.labels, row_provider=row,
                          coords=space.coords, tol=space.tol, name=name, provenance=provenance)


def compose_partial(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """(outer o inner)[i], -1 wherever any stage is undefined."""
    result = np.full(len(inner), -1, dtype=int)
    defined = inner >= 0
    result[defined] = outer[inner[defined]]
    return result


def pseudogroup_words(generators: List[PartialPointMap], n_max: int) -> List[List[np.ndarray]]:
    """Distinct partial maps of word length <= s for s = 0..n_max (cumulative)."""
    names = {g.name for g in generators}
    if not any(g.is_identity for g in generators):
        raise MissingIdentityError()
    for g in generators:
        if g.is_identity:
            continue
        if g.inverse_name is None or g.inverse_name not in names:
            raise MissingInverseError(g.name)

    identity = np.arange(len(generators[0].images))
    seen = {identity.tobytes()}
    current = [identity]
    levels = [list(current)]
    frontier = [identity]
    for _ in range(n_max):
        new_frontier = []
        for word in frontier:
            for g in generators:
                composed = compose_partial(g.images, word)
                if not (composed >= 0).any():
                    continue
                key = composed.tobytes()
                if key not in seen:
                    seen.add(key)
                    new_frontier.append(composed)
        current = current + new_frontier
        levels.append(list(current))
        frontier = new_frontier
    return levels


def pseudogroup_family(space: FiniteMetricSpace, generators: List[PartialPointMap], n_max: int,
                       name: str = "pseudogroup") -> DistanceFamily:
    """d_n(x, y) = max over words g of length <= n defined at both x and y of d(gx, gy).

    Partial maps can break the triangle inequality; violations are recorded in
    the family diagnostics rather than raised.
    """
    n = space.size
    for g in generators:
        if len(g.images) != n:
            raise IndexOutOfRangeError(f"generator '{g.name}'", len(g.images), n)
        defined = g.images[g.images >= 0]
        _check_images(defined, n, f"generator '{g.name}'")

    levels = pseudogroup_words(generators, n_max)
    base = space.matrix()
    running = np.zeros_like(base)
    matrices = []
    done = 0
    for words in levels:
        for word in words[done:]:
            defined = word >= 0
            safe = np.where(defined, word, 0)
            values = base[np.ix_(safe, safe)]
            both = defined[:, None] & defined[None, :]
            np.maximum(running, np.where(both, values, 0.0), out=running)
        done = len(words)
        matrices.append(running.copy())

    violations = [metric_core.validate_metric(m, space.tol).violation_count for m in matrices]
    if any(violations):
        logger.warning(f"Pseudogroup family '{name}' violates the triangle inequality on "
                       f"{sum(1 for v in violations if v)} level(s)")
    return DistanceFamily(
        lambda_grid=np.arange(n_max + 1, dtype=float), base_kind='pseudogroup', labels=space.labels,
        matrices=matrices, coords=space.coords, tol=space.tol, name=name,
        provenance={'builder': 'pseudogroup_family', 'n_max': n_max,
                    'generators': [g.name for g in generators], 'words': len(levels[-1])},
        diagnostics={'metric_violations': violations})


def flow_family(space: FiniteMetricSpace, field: VectorField, r_grid: Sequence[float], dt: float,
                manifold: ManifoldModel, name: str = "flow") -> DistanceFamily:
    """d_r(x, y) = max over integration steps s*dt <= r of d(phi_s x, phi_s y)."""
    if space.coords is None:
        raise GridMismatchError("flow_family needs point coordinates")
    r_grid = np.asarray(r_grid, dtype=float)
    steps = _steps_for_grid(r_grid, dt)
    with PerformanceTimer(logger, f"flow integration '{name}'", f"{int(steps.max())} steps of {dt:g}"):
        trajectory = integrate_flow(field, space.coords, dt, int(steps.max()), manifold, where=name)

    provenance = {'builder': 'flow_family', 'dt': dt, 'r_grid': r_grid.tolist()}
    n = space.size
    if n <= config.DENSE_LIMIT:
        running = space.matrix().copy()
        matrices = []
        done = 0
        for target in steps:
            for step in range(done + 1, target + 1):
                np.maximum(running, manifold.pairwise(trajectory[step]), out=running)
            done = max(done, target)
            matrices.append(running.copy())
        return DistanceFamily(lambda_grid=r_grid, base_kind='flow', labels=space.labels, matrices=matrices,
                              coords=space.coords, tol=space.tol, name=name, provenance=provenance)

    def row(k: int, i: int) -> np.ndarray:
        segment = trajectory[:steps[k] + 1]
        return manifold.distance(segment[:, i:i + 1, :], segment).max(axis=0)

    return DistanceFamily(lambda_grid=r_grid, base_kind='flow', labels=space.labels, row_provider=row,
                          coords=space.coords, tol=space.tol, name=name, provenance=provenance)


# =============================================================================
# Curve-set families
# =============================================================================

def uniform_curve_distance(gamma: Curve, mu: Curve, manifold: ManifoldModel) -> float:
    """sup_t d(gamma(t), mu(t)) over the shared time grid."""
    if gamma.times.shape != mu.times.shape or not np.allclose(gamma.times, mu.times, rtol=0.0, atol=1e-12):
        raise GridMismatchError(f"{len(gamma.times)} vs {len(mu.times)} time samples")
    return float(manifold.distance(gamma.points, mu.points).max())


def _check_bundles(bundles: Sequence[Sequence[CurveBundle]], r_grid: np.ndarray,
                   coords: np.ndarray, manifold: ManifoldModel) -> int:
    """Validate constant curves, radii, nesting and time grids; return max bundle size.

    Nesting is checked through the declared speed bounds only: every curve of
    the level-k bundle must carry a bound <= r_k and radii must not decrease,
    so each sampled curve lies in the true A_r, which is contained in A_r' for
    r <= r'. The sampled sets themselves are not compared; bundles built from
    one shared control library hold r * W and r' * W, which are different
    curves. Monotonicity of the emitted levels comes from the running-max
    envelope in curve_family.
    """
    if len(bundles) != len(r_grid):
        raise GridMismatchError(f"{len(bundles)} bundle levels for {len(r_grid)} radii")
    times = bundles[0][0].curves[0].times
    largest = 1
    for k, level in enumerate(bundles):
        if len(level) != len(coords):
            raise GridMismatchError(f"level {k} has {len(level)} bundles for {len(coords)} points")
        for i, bundle in enumerate(level):
            if bundle.base_index != i:
                raise GridMismatchError(f"bundle at position {i} has base_index {bundle.base_index}")
            if not bundle.curves:
                raise MissingConstantCurveError(i, bundle.radius)
            first = bundle.curves[0]
            if not first.is_constant or float(manifold.distance(first.start, coords[i])) > config.SNAP_TOL:
                raise MissingConstantCurveError(i, bundle.radius)
            if abs(bundle.radius - r_grid[k]) > 1e-12 * max(1.0, abs(r_grid[k])):
                raise GridMismatchError(f"bundle radius {bundle.radius:g} at grid value {r_grid[k]:g}")
            if k > 0 and bundle.radius < bundles[k - 1][i].radius:
                raise NonNestedBundlesError(i, "radii decrease along the grid")
            for curve in bundle.curves:
                if curve.times.shape != times.shape or not np.allclose(curve.times, times, rtol=0.0, atol=1e-12):
                    raise GridMismatchError(f"curve '{curve.label}' uses a different time grid")
                bound = 0.0 if curve.speed_bound is None else curve.speed_bound
                if bound > bundle.radius + 1e-12 * max(1.0, bundle.radius):
                    raise NonNestedBundlesError(
                        i, f"curve '{curve.label}' has speed bound {bound:g} > r={bundle.radius:g}")
                if bundle.radius == 0.0 and not curve.is_constant:
                    raise NonNestedBundlesError(i, "radius 0 bundle holds a non-constant curve")
            largest = max(largest, len(bundle.curves))
    return largest


def _stack_level(level: Sequence[CurveBundle], width: int) -> np.ndarray:
    """(n, width, T+1, D); short bundles are padded with their constant curve."""
    stacks = []
    for bundle in level:
        stacked = bundle.stacked()
        if len(stacked) < width:
            pad = np.repeat(stacked[:1], width - len(stacked), axis=0)
            stacked = np.concatenate([stacked, pad], axis=0)
        stacks.append(stacked)
    return np.stack(stacks)


def directed_curve_distances(stack: np.ndarray, manifold: ManifoldModel, level: int = 0,
                             completion: Optional[CompletionProvider] = None,
                             n_jobs: int = 1) -> np.ndarray:
    """delta[x, y] = max_gamma min_mu sup_t d(gamma(t), mu(t)) for one level."""
    n = stack.shape[0]
    targets = list(range(n))

    def row(x: int) -> np.ndarray:
        gammas = stack[x]
        best = np.empty((n, gammas.shape[0]))
        for block in chunked(targets, config.CURVE_PAIR_CHUNK):
            block = list(block)
            pair = manifold.distance(gammas[None, :, None, :, :], stack[block][:, None, :, :, :])
            best[block] = pair.max(axis=-1).min(axis=-1)
        if completion is not None:
            for y in targets:
                if y == x:
                    continue
                candidates = completion(level, x, y, gammas)
                if candidates is None or len(candidates) == 0:
                    continue
                extra = manifold.distance(gammas[:, None, :, :], candidates[None, :, :, :]).max(axis=-1).min(axis=-1)
                np.minimum(best[y], extra, out=best[y])
        return best.max(axis=1)

    delta = np.vstack(parallel_map(row, range(n), n_jobs))
    np.fill_diagonal(delta, 0.0)
    return delta


def metric_closure(matrix: np.ndarray) -> np.ndarray:
    """Largest metric below ``matrix`` (shortest paths through the sample)."""
    graph = csgraph_from_dense(matrix, null_value=np.inf)
    return shortest_path(graph, method='D', directed=False)


def curve_family(space: FiniteMetricSpace, bundles: Sequence[Sequence[CurveBundle]],
                 r_grid: Sequence[float], manifold: ManifoldModel,
                 completion: Optional[CompletionProvider] = None, n_jobs: int = 1,
                 seed: Optional[int] = None, name: str = "curves") -> DistanceFamily:
    """d_r = delta_r(x,y) + delta_r(y,x) over sampled curve bundles.

    ``bundles[k][i]`` is the bundle of point i at radius r_grid[k]. The
    optional ``completion`` adds admissible candidates for the inner minimum
    (curves of A_r(y) assembled per pair); the result is then closed under the
    triangle inequality. Without completion the raw sum is kept unless it fails
    metric validation, in which case that level is closed as well
    (``closed_levels``). Levels are finally made entrywise monotone by a
    running maximum, recorded as ``envelope_lift`` in the diagnostics.

    The emitted matrices are therefore the closed, monotone envelope of the
    raw min-max sums, not the sums themselves: a closed level can sit below
    the exhaustive value (by ``closure_drop``) and an enveloped level above it
    (by ``envelope_lift``). Raw entries within config.SNAP_TOL of 2d are set
    to exactly 2d before closing, so integration rounding on symmetric samples
    cannot change counts from one level to the next.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if space.coords is None:
        raise GridMismatchError("curve_family needs point coordinates")
    width = _check_bundles(bundles, r_grid, space.coords, manifold)
    base = space.matrix()
    floor = 2.0 * base

    raw_levels = []
    closure_drop = 0.0
    closed_levels = []
    with PerformanceTimer(logger, f"curve family '{name}'", f"n={space.size}, levels={len(r_grid)}, m={width}"):
        for k, level in enumerate(bundles):
            stack = _stack_level(level, width)
            delta = directed_curve_distances(stack, manifold, k, completion, n_jobs)
            d_r = delta + delta.T
            # the t = 0 samples already give d_r >= 2d
            d_r = np.where(np.abs(d_r - floor) <= config.SNAP_TOL, floor, d_r)
            # finite samples can break the triangle inequality; the closure stays >= 2d
            if completion is not None or not metric_core.validate_metric(d_r, space.tol).ok:
                closed = metric_closure(d_r)
                closure_drop = max(closure_drop, float((d_r - closed).max()))
                closed_levels.append(float(r_grid[k]))
                d_r = closed
            raw_levels.append(d_r)
            logger.debug(f"  level r={r_grid[k]:g}: max d_r={d_r.max():.4f}")

    matrices = []
    running = None
    lift = 0.0
    for raw in raw_levels:
        running = raw.copy() if running is None else np.maximum(running, raw)
        lift = max(lift, float((running - raw).max()))
        matrices.append(running.copy())

    lower_gap = min(float((m - floor).min()) for m in matrices)
    for k, m in enumerate(matrices):
        report = metric_core.validate_metric(m, space.tol)
        if not report.ok:
            raise MetricValidationError(f"{name} at r={r_grid[k]:g}", report.violations)
    if lower_gap < -space.tol:
        logger.warning(f"Curve family '{name}' dips below 2d by {-lower_gap:.3e}")

    return DistanceFamily(
        lambda_grid=r_grid, base_kind='curve_bundle', labels=space.labels, matrices=matrices,
        coords=space.coords, tol=space.tol, seed=seed, name=name,
        provenance={'builder': 'curve_family', 'curves_per_bundle': width,
                    'time_samples': int(bundles[0][0].curves[0].n_samples),
                    'completion': completion is not None},
        diagnostics={'envelope_lift': lift, 'closure_drop': closure_drop, 'closed_levels': closed_levels,
                     'min_excess_over_2d': lower_gap})


# =============================================================================
# Generic family operations
# =============================================================================

def reindex_scale(family: DistanceFamily, c: float) -> DistanceFamily:
    """Same matrices on the grid c * lambda."""
    if not c > 0:
        raise NonPositiveScaleError(c)
    return DistanceFamily(
        lambda_grid=family.lambda_grid * c, base_kind=family.base_kind, labels=family.labels,
        matrices=family.matrices, row_provider=family.row_provider, coords=family.coords,
        tol=family.tol, seed=family.seed, name=f"{family.name}*{c:g}",
        provenance={**family.provenance, 'reindexed_by': c}, diagnostics=dict(family.diagnostics))


def synthetic_family(space: FiniteMetricSpace, growth_rate: float, lambda_grid: Sequence[float],
                     cap: Optional[float] = None, name: str = "synthetic") -> DistanceFamily:
    """d_lambda = min(exp(a * lambda) * d, cap); cap defaults to the sample diameter."""
    grid = np.asarray(lambda_grid, dtype=float)
    base = space.matrix()
    cap = float(base.max()) if cap is None else cap
    matrices = [np.minimum(np.exp(growth_rate * lam) * base, cap) for lam in grid]
    for m in matrices:
        np.fill_diagonal(m, 0.0)
    return DistanceFamily(lambda_grid=grid, base_kind='synthetic', labels=space.labels, matrices=matrices,
                          coords=space.coords, tol=space.tol, name=name,
                          provenance={'builder': 'synthetic_family', 'growth_rate': growth_rate, 'cap': cap})


def restrict_family(family: DistanceFamily, indices: Sequence[int]) -> DistanceFamily:
    """Induced family on a subset of the sample."""
    levels = [metric_core.restrict(family.level(k), indices) for k in range(family.n_levels)]
    return DistanceFamily(
        lambda_grid=family.lambda_grid, base_kind=family.base_kind, labels=levels[0].labels,
        matrices=[lvl.matrix() for lvl in levels], coords=levels[0].coords, tol=family.tol,
        seed=family.seed, name=f"{family.name}|{len(levels[0].labels)}",
        provenance={**family.provenance, 'restricted_to': len(levels[0].labels)})


def product_family(family_a: DistanceFamily, family_b: DistanceFamily, name: str = "") -> DistanceFamily:
    """Level-wise max_combine of two families on the same grid."""
    if family_a.n_levels != family_b.n_levels or not np.allclose(family_a.lambda_grid, family_b.lambda_grid):
        raise GridMismatchError("product factors must share the parameter grid")
    levels = [metric_core.max_combine(family_a.level(k), family_b.level(k)) for k in range(family_a.n_levels)]
    name = name or f"{family_a.name}x{family_b.name}"
    provenance = {'builder': 'product_family', 'factors': [family_a.name, family_b.name]}
    kind = family_a.base_kind if family_a.base_kind == family_b.base_kind else 'synthetic'
    if all(lvl.is_dense for lvl in levels):
        return DistanceFamily(lambda_grid=family_a.lambda_grid, base_kind=kind, labels=levels[0].labels,
                              matrices=[lvl.dist for lvl in levels], coords=levels[0].coords,
                              tol=levels[0].tol, name=name, provenance=provenance)
    return DistanceFamily(lambda_grid=family_a.lambda_grid, base_kind=kind, labels=levels[0].labels,
                          row_provider=lambda k, i: levels[k].row(i), coords=levels[0].coords,
                          tol=levels[0].tol, name=name, provenance=provenance)


def validate_family(family: DistanceFamily, base: Optional[FiniteMetricSpace] = None) -> Dict[str, object]:
    """Metric validity per level, entrywise monotonicity, and d_0 = d for dynamical kinds."""
    summary: Dict[str, object] = {'levels': [], 'monotone': True, 'base_matches': None}
    previous = None
    for k in range(family.n_levels):
        space = family.level(k)
        report = metric_core.validate_metric(space)
        summary['levels'].append(report.violation_count)
        rows = np.arange(family.size) if family.is_dense else np.arange(min(family.size, config.VALIDATION_SAMPLE_ROWS))
        current = space.rows(rows)
        if previous is not None and np.any(current < previous - family.tol):
            summary['monotone'] = False
        previous = current
    if base is not None and family.base_kind in ('map', 'pseudogroup', 'flow'):
        rows = np.arange(min(family.size, config.VALIDATION_SAMPLE_ROWS))
        summary['base_matches'] = bool(np.allclose(family.level(0).rows(rows), base.rows(rows),
                                                   atol=family.tol, rtol=0.0))
    summary['valid'] = all(v == 0 for v in summary['levels']) and summary['monotone'] \
        and summary['base_matches'] is not False
    return summary


# =============================================================================
# Persistence
# =============================================================================

def save_family(family: DistanceFamily, directory: str) -> Path:
    """Manifest JSON plus one CSV matrix per grid value."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(family.n_levels):
        filename = f"level_{k:03d}.csv"
        save_metric_csv(family.matrix(k), str(out / filename), family.labels)
        files.append(filename)
    write_json({
        'name': family.name,
        'base_kind': family.base_kind,
        'lambda_grid': family.lambda_grid.tolist(),
        'seed': family.seed,
        'tol': family.tol,
        'provenance': family.provenance,
        'files': files,
    }, out / "family.json")
    logger.info(f"Saved family '{family.name}' ({family.n_levels} levels) to {out}")
    return out


def load_family(directory: str) -> DistanceFamily:
    src = Path(directory)
    with open(src / "family.json", encoding='utf-8') as f:
        manifest = json.load(f)
    spaces = [load_metric_csv(str(src / filename)) for filename in manifest['files']]
    return DistanceFamily(
        lambda_grid=manifest['lambda_grid'], base_kind=manifest['base_kind'], labels=spaces[0].labels,
        matrices=[s.dist for s in spaces], tol=manifest.get('tol', config.TOL_METRIC),
        seed=manifest.get('seed'), name=manifest.get('name', ''), provenance=manifest.get('provenance', {}))
