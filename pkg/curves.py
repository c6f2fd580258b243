"""
Admissible curves of anchored control systems.

Curves are driven by piecewise-constant controls drawn from the unit ball of
the control norm and integrated with the RK4 step of the families module.
This module also provides curve lengths and reparametrization, quotient
norms on the distribution, the Minkowski check, and the sampled admissible
graph behind the accessibility partition and leafwise distances.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, dijkstra

import config
from data_models import (
    AdmissibleDistance, AdmissibleGraph, AnchoredSystem, ControlNorm, Curve, CurveBundle,
    EdgeGeometry, FiniteMetricSpace, ManifoldModel, MinkowskiReport
)
from exceptions import (
    AsymmetricControlsError, BadIntervalError, BlowUpError, ConfigurationError, DegenerateDirectionError,
    EndpointMismatchError, GridMismatchError, InvalidNormError, NegativeRadiusError,
    NotInRangeError, UnresolvableVelocityError, ZeroLengthError
)
from families import rk4_step
from logger import PerformanceTimer, get_logger
from utils import chunked, derive_rng, parallel_map

logger = get_logger(__name__)


def time_grid(n_samples: int = config.CURVE_TIME_SAMPLES) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_samples)


def _interpolate(points: np.ndarray, query: np.ndarray,
                 manifold: Optional[ManifoldModel] = None) -> np.ndarray:
    """Linear interpolation along the time axis (second to last) at times in [0, 1]."""
    n_intervals = points.shape[-2] - 1
    pos = np.clip(np.asarray(query, dtype=float), 0.0, 1.0) * n_intervals
    lo = np.minimum(np.floor(pos).astype(int), n_intervals - 1)
    frac = (pos - lo)[:, None]
    out = points[..., lo, :] * (1.0 - frac) + points[..., lo + 1, :] * frac
    return out if manifold is None else manifold.retract(out)


# =============================================================================
# Control norms
# =============================================================================

def unit_directions(k: int, n_directions: int = config.UNIFORM_BALL_DIRECTIONS, seed: int = 0) -> np.ndarray:
    """Probe directions on the unit sphere of R^k; axes are always included."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        angles = 2.0 * np.pi * np.arange(n_directions) / n_directions
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    axes = np.vstack([np.eye(k), -np.eye(k)])
    extra = max(0, n_directions - len(axes))
    random = np.random.default_rng(seed).standard_normal((extra, k))
    random /= np.linalg.norm(random, axis=-1, keepdims=True)
    return np.vstack([axes, random])


def validate_control_norm(norm: ControlNorm, seed: int = 0):
    """Positive definiteness (quadratic) or spot-checked homogeneity and positivity (convex)."""
    if norm.dim == 0:
        return
    if norm.kind == 'quadratic':
        q = norm.matrix
        if q.shape != (norm.dim, norm.dim) or not np.allclose(q, q.T, rtol=0.0, atol=1e-12):
            raise InvalidNormError(norm.label, "matrix is not symmetric")
        smallest = float(np.linalg.eigvalsh(q).min())
        if smallest <= 0.0:
            raise InvalidNormError(norm.label, f"smallest eigenvalue {smallest:.3e}")
        return
    directions = unit_directions(norm.dim, seed=seed)
    values = norm(directions)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise InvalidNormError(norm.label, "norm vanishes on a nonzero direction")
    for t in (0.5, 3.0):
        if not np.allclose(norm(t * directions), t * values, rtol=1e-6, atol=0.0):
            raise InvalidNormError(norm.label, f"not positively homogeneous at t={t:g}")


def control_library(norm: ControlNorm, n_curves: int, n_segments: int, seed: int) -> np.ndarray:
    """Controls in the unit ball of ``norm``, shape (n_curves, n_segments, k).

    The first 2k entries are the constant extremal controls +-e_i / F(e_i);
    the others are drawn per segment by norm scaling from a generator seeded
    with (seed, curve index), so every base point integrates the same library.

    Norm scaling is radially uniform: a Gaussian direction g is pushed to the
    unit F-sphere as g / F(g) and shrunk by U^(1/k). That is the uniform
    (volume) law on the F-ball only when F is Euclidean; for other norms the
    angular law is the Gaussian one pushed to the F-sphere. F(u) <= 1 holds
    exactly either way.
    """
    k = norm.dim
    library = np.zeros((n_curves, n_segments, k))
    if k == 0:
        return library
    axes = np.vstack([np.eye(k), -np.eye(k)])
    extremal = axes / norm(axes)[:, None]
    for c in range(n_curves):
        if c < len(extremal):
            library[c] = extremal[c]
            continue
        rng = derive_rng(seed, c)
        directions = rng.standard_normal((n_segments, k))
        radii = rng.random(n_segments) ** (1.0 / k)
        library[c] = directions * (radii / norm(directions))[:, None]
    return library


def time_warps(n_curves: int, n_intervals: int, n_segments: int, seed: int) -> np.ndarray:
    """Monotone piecewise-linear maps of [0, 1] sampled on the grid, shape (n_curves, T+1)."""
    t = np.linspace(0.0, 1.0, n_intervals + 1)
    knots = np.linspace(0.0, 1.0, n_segments + 1)
    warps = np.empty((n_curves, n_intervals + 1))
    for c in range(n_curves):
        weights = derive_rng(seed, c, 1).uniform(0.25, 1.75, n_segments)
        values = np.concatenate([[0.0], np.cumsum(weights)]) / weights.sum()
        warps[c] = np.interp(t, knots, values)
    return warps


# =============================================================================
# Sampling
# =============================================================================

def integrate_controls(system: AnchoredSystem, starts: np.ndarray, controls: np.ndarray,
                       n_substeps: int = config.CURVE_SUBSTEPS) -> np.ndarray:
    """Trajectories of x' = sum_i u_i #(x, e_i); controls are (B, T, k), result (B, T+1, D)."""
    current = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    controls = np.asarray(controls, dtype=float)
    n_intervals = controls.shape[1]
    h = 1.0 / (n_intervals * n_substeps)
    manifold = system.manifold
    trajectory = np.empty((len(current), n_intervals + 1, current.shape[1]))
    trajectory[:, 0] = current
    for j in range(n_intervals):
        u = controls[:, j, :]
        if system.control_dim and np.any(u):
            field = lambda points, _u=u: system.velocity(points, _u)
            for _ in range(n_substeps):
                current = manifold.retract(rk4_step(field, current, h))
            if not manifold.in_chart(current):
                raise BlowUpError("curve integration", (j + 1) / n_intervals)
        trajectory[:, j + 1] = current
    return trajectory


def _constant_curve(point: np.ndarray, times: np.ndarray, k: int, label: str) -> Curve:
    points = np.repeat(np.asarray(point, dtype=float)[None, :], len(times), axis=0)
    return Curve(times=times, points=points, controls=np.zeros((len(times) - 1, k)),
                 speed_bound=0.0, label=label)


def _bundles_at_radius(system: AnchoredSystem, coords: np.ndarray, radius: float, library: np.ndarray,
                       times: np.ndarray, first_index: int) -> List[CurveBundle]:
    n, dim = coords.shape
    n_intervals = len(times) - 1
    k = system.control_dim
    constants = [_constant_curve(coords[i], times, k, f"p{first_index + i}:const") for i in range(n)]
    if radius == 0.0 or k == 0 or len(library) == 0:
        return [CurveBundle(first_index + i, radius, [constants[i]]) for i in range(n)]

    segment = (np.arange(n_intervals) * library.shape[1]) // n_intervals
    per_interval = radius * library[:, segment, :]
    m = len(library)
    paths = integrate_controls(system, np.repeat(coords, m, axis=0), np.tile(per_interval, (n, 1, 1)))
    paths = paths.reshape(n, m, n_intervals + 1, dim)
    bundles = []
    for i in range(n):
        curves = [constants[i]] + [
            Curve(times=times, points=paths[i, c], controls=per_interval[c], speed_bound=radius,
                  label=f"p{first_index + i}:c{c}")
            for c in range(m)
        ]
        bundles.append(CurveBundle(first_index + i, radius, curves))
    return bundles


def warp_curve(curve: Curve, warp: np.ndarray, manifold: ManifoldModel) -> Curve:
    """gamma o tau on the same grid; controls pick up the factor tau'."""
    n_intervals = curve.n_samples - 1
    points = _interpolate(curve.points, warp, manifold)
    controls = None
    if curve.controls is not None:
        slopes = np.diff(warp) * n_intervals
        mids = 0.5 * (warp[:-1] + warp[1:])
        index = np.clip(np.floor(mids * n_intervals).astype(int), 0, n_intervals - 1)
        controls = curve.controls[index] * slopes[:, None]
    return Curve(times=curve.times, points=points, controls=controls, speed_bound=curve.speed_bound,
                 label=f"{curve.label}:warp")


def sample_bundles(system: AnchoredSystem, coords: np.ndarray, r_grid: Sequence[float],
                   n_curves: int = config.N_CURVES, n_segments: int = config.N_SEGMENTS, seed: int = 0,
                   n_samples: int = config.CURVE_TIME_SAMPLES, n_jobs: int = 1,
                   length_filtered: bool = False) -> List[List[CurveBundle]]:
    """Bundles for every radius and base point: ``result[k][i]`` is A_{r_k}(x_i).

    Controls are r * W for one shared library W, so the curves of different
    base points and radii are structurally matched. ``length_filtered``
    replaces each curve by a seeded monotone time warp of itself (length <= r
    with an arbitrary speed profile).
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid < 0.0):
        raise NegativeRadiusError(float(r_grid.min()))
    if n_segments < 1:
        raise ConfigurationError("n_segments", f"must be at least 1, got {n_segments}")
    validate_control_norm(system.control_norm)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    times = time_grid(n_samples)
    library = control_library(system.control_norm, n_curves, n_segments, seed)
    warps = time_warps(n_curves, n_samples - 1, n_segments, seed) if length_filtered else None
    chunks = [list(c) for c in chunked(list(range(len(coords))), config.CURVE_PAIR_CHUNK)]

    levels = []
    for radius in r_grid:
        parts = parallel_map(
            lambda idx, _r=float(radius): _bundles_at_radius(system, coords[idx], _r, library, times, idx[0]),
            chunks, n_jobs)
        level = [bundle for part in parts for bundle in part]
        if warps is not None:
            for bundle in level:
                bundle.curves = bundle.curves[:1] + [
                    warp_curve(curve, warps[c], system.manifold) for c, curve in enumerate(bundle.curves[1:])
                ]
        levels.append(level)
    logger.debug(f"Sampled {len(r_grid)} x {len(coords)} bundles of {n_curves + 1} curves")
    return levels


def sample_bounded_curves(system: AnchoredSystem, x: np.ndarray, r: float,
                          n_curves: int = config.N_CURVES, n_segments: int = config.N_SEGMENTS,
                          seed: int = 0, base_index: int = 0,
                          n_samples: int = config.CURVE_TIME_SAMPLES) -> CurveBundle:
    """The constant curve plus n_curves trajectories with F(u) <= r from x."""
    if r < 0.0:
        raise NegativeRadiusError(r)
    bundle = sample_bundles(system, np.atleast_2d(x), [r], n_curves, n_segments, seed, n_samples)[0][0]
    bundle.base_index = base_index
    return bundle


def sample_length_bounded_curves(system: AnchoredSystem, x: np.ndarray, r: float,
                                 n_curves: int = config.N_CURVES, n_segments: int = config.N_SEGMENTS,
                                 seed: int = 0, base_index: int = 0,
                                 n_samples: int = config.CURVE_TIME_SAMPLES) -> CurveBundle:
    """Curves of length <= r whose speed profile is not bounded by r."""
    if r < 0.0:
        raise NegativeRadiusError(r)
    bundle = sample_bundles(system, np.atleast_2d(x), [r], n_curves, n_segments, seed, n_samples,
                            length_filtered=True)[0][0]
    bundle.base_index = base_index
    return bundle


def subsample_bundles(bundles: List[List[CurveBundle]], n_keep: int) -> List[List[CurveBundle]]:
    """The same bundles cut to the constant curve plus their first n_keep curves."""
    return [[CurveBundle(b.base_index, b.radius, b.curves[:n_keep + 1]) for b in level] for level in bundles]


# =============================================================================
# Length and reparametrization
# =============================================================================

def _pseudo_solve(matrix: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Least-norm solution of matrix @ u = v and a basis of the kernel (columns)."""
    u_mat, s, vt = np.linalg.svd(matrix, full_matrices=True)
    rank = int(np.count_nonzero(s > config.RANK_REL_THRESHOLD * s.max())) if s.size and s.max() > 0 else 0
    solution = vt[:rank].T @ ((u_mat[:, :rank].T @ v) / s[:rank])
    return solution, vt[rank:].T


def _minimize_over_kernel(norm: ControlNorm, u0: np.ndarray, kernel: np.ndarray) -> float:
    """Coordinate descent of F over u0 + span(kernel)."""
    best = float(norm(u0))
    if kernel.shape[1] == 0:
        return best
    coeffs = np.zeros(kernel.shape[1])
    for _ in range(config.QUOTIENT_NORM_MAX_ITER):
        previous = best
        for j in range(kernel.shape[1]):
            base = u0 + kernel @ coeffs
            direction = kernel[:, j]
            result = minimize_scalar(lambda s: float(norm(base + s * direction)), method='brent',
                                     options={'xtol': 1e-10})
            if result.fun < best:
                coeffs[j] += result.x
                best = float(result.fun)
        if previous - best <= config.QUOTIENT_NORM_REL_TOL * max(best, 1e-300):
            break
    return best


def quotient_norm(system: AnchoredSystem, x: np.ndarray, v: np.ndarray,
                  range_tol: float = config.RANGE_REL_TOL) -> float:
    """F_D(x, v) = inf { F(u) : #(x, u) = v }."""
    v = np.asarray(v, dtype=float)
    scale = max(1.0, float(np.linalg.norm(v)))
    anchor = system.anchor_matrix(np.asarray(x, dtype=float)[None, :])[0]
    if system.control_dim == 0:
        residual = float(np.linalg.norm(v))
        if residual > range_tol * scale:
            raise NotInRangeError(residual)
        return 0.0

    norm = system.control_norm
    if norm.kind == 'quadratic':
        # u = L^{-T} w with Q = L L^T turns F into the Euclidean norm of w
        transform = np.linalg.inv(np.linalg.cholesky(norm.matrix)).T
        reduced = anchor @ transform
        w, _ = _pseudo_solve(reduced, v)
        residual = float(np.linalg.norm(reduced @ w - v))
        if residual > range_tol * scale:
            raise NotInRangeError(residual)
        return float(np.linalg.norm(w))

    u0, kernel = _pseudo_solve(anchor, v)
    residual = float(np.linalg.norm(anchor @ u0 - v))
    if residual > range_tol * scale:
        raise NotInRangeError(residual)
    return _minimize_over_kernel(norm, u0, kernel)


def interval_speeds(curve: Curve, system: AnchoredSystem) -> np.ndarray:
    """F(u) on every time interval, from the control trace or resolved from finite differences."""
    n_intervals = curve.n_samples - 1
    if curve.controls is not None:
        if system.control_dim == 0:
            return np.zeros(n_intervals)
        return np.asarray(system.control_norm(curve.controls), dtype=float)

    manifold = system.manifold
    dt = np.diff(curve.times)
    if manifold.kind == 'torus':
        steps = manifold.displacement(curve.points[:-1], curve.points[1:])
    else:
        steps = curve.points[1:] - curve.points[:-1]
    speeds = np.empty(n_intervals)
    for j in range(n_intervals):
        mid = manifold.retract(curve.points[j] + 0.5 * steps[j])
        velocity = steps[j] / dt[j]
        if manifold.kind == 'sphere':
            normal = mid / np.linalg.norm(mid)
            velocity = velocity - np.dot(velocity, normal) * normal
        try:
            speeds[j] = quotient_norm(system, mid, velocity, range_tol=config.VELOCITY_RESIDUAL_TOL)
        except NotInRangeError as e:
            raise UnresolvableVelocityError(j, e.residual)
    return speeds


def running_length(curve: Curve, system: AnchoredSystem) -> np.ndarray:
    """Length of the prefix up to every time sample."""
    return np.concatenate([[0.0], np.cumsum(interval_speeds(curve, system) * np.diff(curve.times))])


def curve_length(curve: Curve, system: AnchoredSystem) -> float:
    return float(running_length(curve, system)[-1])


def arc_length_reparametrize(curve: Curve, system: AnchoredSystem) -> Curve:
    """Same image traversed at constant speed l(gamma) on [0, 1]."""
    speeds = interval_speeds(curve, system)
    cumulative = np.concatenate([[0.0], np.cumsum(speeds * np.diff(curve.times))])
    total = float(cumulative[-1])
    if total <= config.SNAP_TOL:
        raise ZeroLengthError()

    # first time each running length is reached; stationary stretches collapse
    levels, first = np.unique(cumulative, return_index=True)
    tau = np.interp(curve.times * total, levels, curve.times[first])
    points = _interpolate(curve.points, tau, system.manifold)

    controls = None
    if curve.controls is not None:
        n_intervals = curve.n_samples - 1
        mids = 0.5 * (tau[:-1] + tau[1:])
        index = np.clip(np.floor(mids * n_intervals).astype(int), 0, n_intervals - 1)
        moving = np.flatnonzero(speeds > 0.0)
        stalled = speeds[index] <= 0.0
        if stalled.any():
            index[stalled] = moving[np.abs(moving[None, :] - index[stalled][:, None]).argmin(axis=1)]
        controls = curve.controls[index] * (total / speeds[index])[:, None]
    return Curve(times=curve.times, points=points, controls=controls, speed_bound=curve.speed_bound,
                 label=f"{curve.label}:arc")


def concatenate(a: Curve, b: Curve, manifold: ManifoldModel) -> Curve:
    """a then b on [0, 1]; the result carries the intervals of both curves."""
    gap = float(manifold.distance(a.end, b.start))
    if gap > config.SNAP_TOL:
        raise EndpointMismatchError(gap)
    n_a, n_b = a.n_samples - 1, b.n_samples - 1
    total = n_a + n_b
    shift = manifold.lift_near(b.start, a.end) - b.start
    points = np.vstack([a.points, (b.points + shift)[1:]])
    controls = None
    if a.controls is not None and b.controls is not None:
        controls = np.vstack([a.controls * (total / n_a), b.controls * (total / n_b)])
    return Curve(times=np.linspace(0.0, 1.0, total + 1), points=points, controls=controls,
                 label=f"{a.label}*{b.label}")


def restrict_subcurve(curve: Curve, t0: float, t1: float,
                      manifold: Optional[ManifoldModel] = None) -> Curve:
    """gamma on [t0, t1], reparametrized onto [0, 1] with the same number of samples."""
    if not (0.0 <= t0 < t1 <= 1.0):
        raise BadIntervalError(t0, t1)
    n_intervals = curve.n_samples - 1
    tau = t0 + (t1 - t0) * curve.times
    points = _interpolate(curve.points, tau, manifold)
    controls = None
    if curve.controls is not None:
        mids = 0.5 * (tau[:-1] + tau[1:])
        index = np.clip(np.floor(mids * n_intervals).astype(int), 0, n_intervals - 1)
        controls = curve.controls[index] * (t1 - t0)
    return Curve(times=curve.times, points=points, controls=controls, speed_bound=curve.speed_bound,
                 label=f"{curve.label}[{t0:g},{t1:g}]")


# =============================================================================
# Minkowski check
# =============================================================================

def minkowski_check(norm: ControlNorm, sample_dirs: Optional[np.ndarray] = None,
                    h: float = config.MINKOWSKI_STEP) -> MinkowskiReport:
    """Smallest eigenvalue of the finite-difference Hessian of F^2/2 per direction."""
    directions = unit_directions(norm.dim) if sample_dirs is None else np.atleast_2d(
        np.asarray(sample_dirs, dtype=float))
    k = norm.dim
    steps = np.eye(k) * h

    def half_square(u):
        return 0.5 * float(norm(u)) ** 2

    minima = []
    for u in directions:
        if float(norm(u)) <= 1e-12:
            raise DegenerateDirectionError(u)
        hessian = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                ei, ej = steps[i], steps[j]
                value = (half_square(u + ei + ej) - half_square(u + ei - ej)
                         - half_square(u - ei + ej) + half_square(u - ei - ej)) / (4.0 * h * h)
                hessian[i, j] = hessian[j, i] = value
        minima.append(float(np.linalg.eigvalsh(hessian).min()))
    minima = np.asarray(minima)
    passed = bool(np.all(minima > config.MINKOWSKI_EIG_TOL))
    if not passed:
        logger.warning(f"Norm '{norm.label}' fails the Minkowski check: min eigenvalue {minima.min():.3e}")
    return MinkowskiReport(min_eigenvalues=minima, directions=directions, passed=passed)


# =============================================================================
# Admissible graph, accessibility and leafwise distances
# =============================================================================

def build_admissible_graph(system: AnchoredSystem, space: FiniteMetricSpace, r_probe: float = config.R_PROBE,
                           n_probe: int = config.N_PROBE, eps_link: float = config.EPS_LINK, seed: int = 0,
                           n_segments: int = config.N_SEGMENTS, n_samples: int = config.CURVE_TIME_SAMPLES,
                           n_jobs: int = 1, gap_penalty: Optional[float] = None) -> AdmissibleGraph:
    """Edge p-q weighted by the shortest probe-curve prefix from p reaching within eps_link of q,
    plus a gap penalty (eps_link unless given) for closing the gap; symmetrized."""
    if not system.symmetric_controls:
        raise AsymmetricControlsError()
    if space.coords is None:
        raise GridMismatchError("the admissible graph needs point coordinates")
    coords = space.coords
    n = len(coords)
    manifold = system.manifold
    penalty = eps_link if gap_penalty is None else gap_penalty

    with PerformanceTimer(logger, "admissible graph", f"n={n}, r_probe={r_probe:g}, curves={n_probe}"):
        bundles = sample_bundles(system, coords, [r_probe], n_probe, n_segments, seed, n_samples, n_jobs)[0]

        def scan(p: int):
            stack = bundles[p].stacked()
            lengths = np.stack([running_length(c, system) for c in bundles[p].curves])
            near = manifold.distance(stack[:, :, None, :], coords[None, None, :, :]) <= eps_link
            cost = np.where(near, lengths[:, :, None], np.inf)
            first = np.argmin(cost, axis=1)
            best = cost.min(axis=1)
            curve = np.argmin(best, axis=0)
            columns = np.arange(n)
            return stack, lengths, best[curve, columns] + penalty, curve, first[curve, columns]

        results = parallel_map(scan, range(n), n_jobs)

    directed = np.full((n, n), np.inf)
    found: Dict[Tuple[int, int], EdgeGeometry] = {}
    for p, (_, _, value, curve, sample) in enumerate(results):
        for q in np.flatnonzero(np.isfinite(value)):
            if q != p:
                directed[p, q] = value[q]
                found[(p, int(q))] = EdgeGeometry(p, int(q), int(curve[q]), int(sample[q]), float(value[q]))

    weights = np.minimum(directed, directed.T)
    np.fill_diagonal(weights, 0.0)
    witnesses: Dict[Tuple[int, int], EdgeGeometry] = {}
    for (p, q), edge in found.items():
        if edge.length <= weights[p, q]:
            witnesses.setdefault((p, q), edge)
            witnesses.setdefault((q, p), edge)

    _, labels = connected_components(csgraph_from_dense(weights, null_value=np.inf), directed=False)
    graph = AdmissibleGraph(system=system, coords=coords, radius=r_probe, eps_link=eps_link, weights=weights,
                            witnesses=witnesses, prefixes=[r[0] for r in results],
                            cumulative=[r[1] for r in results], labels=labels, penalty=penalty)
    logger.info(f"Admissible graph: {n} points, {len(found)} directed links, {graph.n_classes} class(es)")
    return graph


def accessibility_partition(system: AnchoredSystem, space: FiniteMetricSpace, r_probe: float = config.R_PROBE,
                            n_probe: int = config.N_PROBE, eps_link: float = config.EPS_LINK,
                            seed: int = 0, n_jobs: int = 1) -> List[int]:
    """Approximate leaf labels: connected components of the admissible graph."""
    graph = build_admissible_graph(system, space, r_probe, n_probe, eps_link, seed, n_jobs=n_jobs)
    return [int(label) for label in graph.labels]


def admissible_distance_matrix(graph: AdmissibleGraph) -> Tuple[np.ndarray, np.ndarray]:
    """All-pairs shortest admissible distances and Dijkstra predecessors."""
    csgraph = csgraph_from_dense(graph.weights, null_value=np.inf)
    return dijkstra(csgraph, directed=False, return_predecessors=True)


def admissible_graph_distance(graph: AdmissibleGraph, x: int, y: int) -> AdmissibleDistance:
    """Upper-biased estimate of the leafwise distance d_L(x, y); unreachable pairs get +inf."""
    if x == y:
        return AdmissibleDistance(0.0, True, [x])
    if graph.labels is not None and graph.labels[x] != graph.labels[y]:
        return AdmissibleDistance(float('inf'), False, [])
    csgraph = csgraph_from_dense(graph.weights, null_value=np.inf)
    dist, predecessors = dijkstra(csgraph, directed=False, indices=x, return_predecessors=True)
    if not np.isfinite(dist[y]):
        return AdmissibleDistance(float('inf'), False, [])
    path = [y]
    while path[-1] != x:
        path.append(int(predecessors[path[-1]]))
    return AdmissibleDistance(float(dist[y]), True, path[::-1])


class ConcatenationCompletion:
    """Extra members of A_r(y) for curve_family: run along the sampled admissible
    path from y to x at speed r, then follow a curve of x delayed by the travel time.

    These are concatenations and restrictions of admissible curves, so they
    belong to the same curve family; with them delta_r(x, y) never exceeds the
    sampled admissible distance.
    """

    def __init__(self, graph: AdmissibleGraph, r_grid: Sequence[float],
                 n_samples: int = config.CURVE_TIME_SAMPLES):
        self.graph = graph
        self.r_grid = np.asarray(r_grid, dtype=float)
        self.times = time_grid(n_samples)
        self.manifold = graph.system.manifold
        self.distances, self.predecessors = admissible_distance_matrix(graph)
        self._polylines: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = {}

    def path(self, start: int, end: int) -> List[int]:
        nodes = [end]
        while nodes[-1] != start:
            nodes.append(int(self.predecessors[start, nodes[-1]]))
        return nodes[::-1]

    def polyline(self, start: int, end: int) -> Tuple[np.ndarray, np.ndarray]:
        """Chart vertices from start to end with their running admissible length."""
        key = (start, end)
        if key in self._polylines:
            return self._polylines[key]
        graph = self.graph
        vertices = [graph.coords[start]]
        lengths = [0.0]
        nodes = self.path(start, end)
        for a, b in zip(nodes[:-1], nodes[1:]):
            edge = graph.witnesses[(a, b)]
            prefix = graph.prefixes[edge.source][edge.curve_index, :edge.sample + 1]
            running = graph.cumulative[edge.source][edge.curve_index, :edge.sample + 1]
            if edge.source == a:
                points = list(prefix[1:]) + [graph.coords[b]]
                steps = list(running[1:]) + [running[-1] + graph.gap_cost]
            else:
                points = list(prefix[::-1])
                steps = list(graph.gap_cost + running[-1] - running[::-1])
            offset = lengths[-1]
            for point, step in zip(points, steps):
                vertices.append(self.manifold.lift_near(point, vertices[-1]))
                lengths.append(offset + step)
        result = (np.asarray(vertices), np.asarray(lengths))
        self._polylines[key] = result
        return result

    def _along(self, vertices: np.ndarray, lengths: np.ndarray, s: np.ndarray) -> np.ndarray:
        index = np.clip(np.searchsorted(lengths, s, side='right') - 1, 0, len(lengths) - 2)
        span = lengths[index + 1] - lengths[index]
        frac = np.where(span > 0.0, (s - lengths[index]) / np.where(span > 0.0, span, 1.0), 1.0)
        frac = np.clip(frac, 0.0, 1.0)[:, None]
        return self.manifold.retract(vertices[index] * (1.0 - frac) + vertices[index + 1] * frac)

    def __call__(self, level: int, x: int, y: int, gammas: np.ndarray) -> Optional[np.ndarray]:
        radius = float(self.r_grid[level])
        if radius <= 0.0 or x == y or not np.isfinite(self.distances[y, x]):
            return None
        vertices, lengths = self.polyline(y, x)
        total = float(lengths[-1])
        if len(vertices) < 2:
            return None
        lead = self._along(vertices, lengths, np.minimum(radius * self.times, total))
        candidates = np.repeat(lead[None, :, :], len(gammas), axis=0)
        delay = total / radius
        if delay < 1.0:
            late = self.times >= delay
            candidates[:, late] = _interpolate(gammas, self.times[late] - delay, self.manifold)
        return candidates


# =============================================================================
# Persistence
# =============================================================================

def save_bundle_csv(bundle: CurveBundle, output_path: str) -> Path:
    """One row per (curve, sample): curve, t, x1..xd, u1..uk (controls of the following interval)."""
    frames = []
    for c, curve in enumerate(bundle.curves):
        frame = pd.DataFrame({'curve': c, 't': curve.times})
        for d in range(curve.points.shape[1]):
            frame[f"x{d + 1}"] = curve.points[:, d]
        if curve.controls is not None:
            padded = np.vstack([curve.controls, np.full((1, curve.controls.shape[1]), np.nan)])
            for d in range(padded.shape[1]):
                frame[f"u{d + 1}"] = padded[:, d]
        frames.append(frame)
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format='%.17g')
    return path


def load_bundle_csv(input_path: str, base_index: int, radius: float) -> CurveBundle:
    frame = pd.read_csv(input_path, float_precision='round_trip')
    x_cols = [c for c in frame.columns if c.startswith('x')]
    u_cols = [c for c in frame.columns if c.startswith('u')]
    curves = []
    for c, rows in frame.groupby('curve', sort=True):
        controls = rows[u_cols].to_numpy(dtype=float)[:-1] if u_cols else None
        curves.append(Curve(times=rows['t'].to_numpy(dtype=float), points=rows[x_cols].to_numpy(dtype=float),
                            controls=controls, speed_bound=radius, label=f"p{base_index}:c{c}"))
    return CurveBundle(base_index=base_index, radius=radius, curves=curves)
