"""
Entropy estimation from distance families.

Per epsilon, ln N(d_lambda, eps) is fitted against lambda by least squares on
a trailing window of the grid; the estimate is the largest slope. The
structural checks live here as well: covering/packing bracket, finiteness
bound and growth condition, controllability plateau, and the claim
evaluation of scenario runs.
"""

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
import metric_core
from data_models import (
    BracketRow, DistanceFamily, EntropyReport, EpsilonSlope, FiniteMetricSpace, GrowthCheck,
    PlateauReport, PlateauRow, ScenarioBuild
)
from exceptions import NegativeInputError, NotControllableError, WindowTooSmallError
from logger import get_logger
from utils import parallel_map

logger = get_logger(__name__)

COUNT_KINDS = ('packing', 'cover')


# =============================================================================
# Slopes
# =============================================================================

def fit_growth_slope(lambdas: Sequence[float], counts: Sequence[int],
                     fit_window_fraction: float = config.FIT_WINDOW_FRACTION) -> Tuple[float, float, float, np.ndarray]:
    """OLS slope of ln(count) on the trailing window of the grid.

    The window holds ceil(fit_window_fraction * n) points, widened to
    MIN_WINDOW_POINTS when that is fewer (logged at debug level); the returned
    mask shows the window actually fitted. WindowTooSmallError is raised only
    when the whole grid is shorter than MIN_WINDOW_POINTS.

    Returns (slope, intercept, rms residual, window mask).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n_points = len(lambdas)
    if n_points < config.MIN_WINDOW_POINTS:
        raise WindowTooSmallError(n_points, config.MIN_WINDOW_POINTS)
    requested = math.ceil(fit_window_fraction * n_points)
    width = min(n_points, max(config.MIN_WINDOW_POINTS, requested))
    if width > requested:
        logger.debug(f"Fit window widened from {requested} to {width} of {n_points} points")
    window = np.zeros(n_points, dtype=bool)
    window[n_points - width:] = True

    x = lambdas[window]
    y = np.log(counts[window])
    if np.all(y == y[0]):
        return 0.0, float(y[0]), 0.0, window
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), residual, window


def _level_counts(family: DistanceFamily, k: int, eps: np.ndarray, count_kind: str,
                  limit: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    space = family.level(k)
    if count_kind == 'cover':
        counts = np.array([metric_core.greedy_cover_count(space, e) for e in eps], dtype=int)
        return counts, np.zeros(len(eps), dtype=bool)
    return metric_core.greedy_packing_counts(space, eps, limit=limit)


def count_table(family: DistanceFamily, eps_grid: Sequence[float], count_kind: str = 'packing',
                n_jobs: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Counts and truncation flags, shape (levels, len(eps_grid))."""
    eps = np.asarray(eps_grid, dtype=float)
    cap = math.ceil(config.SATURATION_FRACTION * family.size)
    limit = cap if family.size > config.COUNT_TRUNCATION_MIN_SIZE else None
    rows = parallel_map(lambda k: _level_counts(family, k, eps, count_kind, limit), range(family.n_levels), n_jobs)
    return np.vstack([r[0] for r in rows]), np.vstack([r[1] for r in rows])


def growth_slopes(family: DistanceFamily, eps_grid: Sequence[float],
                  fit_window_fraction: float = config.FIT_WINDOW_FRACTION, count_kind: str = 'packing',
                  n_jobs: int = 1) -> List[EpsilonSlope]:
    """Per-epsilon slope table, epsilon descending.

    The fit uses the prefix of the grid before the count reaches
    SATURATION_FRACTION * n. With fewer than MIN_WINDOW_POINTS unsaturated
    levels the whole grid is fitted and the row is flagged saturated.
    """
    if family.n_levels < config.MIN_WINDOW_POINTS:
        raise WindowTooSmallError(family.n_levels, config.MIN_WINDOW_POINTS)
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    counts, truncated = count_table(family, eps, count_kind, n_jobs)
    cap = math.ceil(config.SATURATION_FRACTION * family.size)
    lambdas = family.lambda_grid

    table = []
    for e_index, epsilon in enumerate(eps):
        column = counts[:, e_index]
        reached = np.flatnonzero(column >= cap)
        prefix = family.n_levels if len(reached) == 0 else int(reached[0])
        saturated = prefix < config.MIN_WINDOW_POINTS
        used = family.n_levels if saturated else prefix
        slope, intercept, residual, window = fit_growth_slope(lambdas[:used], column[:used], fit_window_fraction)
        in_window = np.zeros(family.n_levels, dtype=bool)
        in_window[:used] = window
        table.append(EpsilonSlope(epsilon=float(epsilon), lambdas=lambdas.copy(), counts=column.copy(),
                                  in_window=in_window, slope=slope, intercept=intercept, residual=residual,
                                  saturated=bool(saturated), truncated=bool(truncated[:, e_index].any())))
        logger.debug(f"  eps={epsilon:g}: counts={column.tolist()} slope={slope:.4f}"
                     f"{' (saturated)' if saturated else ''}")
    return table


def entropy_estimate(family: DistanceFamily, eps_grid: Sequence[float],
                     fit_window_fraction: float = config.FIT_WINDOW_FRACTION, count_kind: str = 'packing',
                     n_jobs: int = 1, half_family: Optional[DistanceFamily] = None) -> EntropyReport:
    """h = max of the per-epsilon slopes (unsaturated ones when any exist)."""
    per_eps = growth_slopes(family, eps_grid, fit_window_fraction, count_kind, n_jobs)
    pool = [row for row in per_eps if not row.saturated] or per_eps
    h_estimate = max(row.slope for row in pool)

    # slopes should not drop as epsilon shrinks
    slopes = [row.slope for row in per_eps]
    drops = [slopes[i] - slopes[i + 1] for i in range(len(slopes) - 1)]
    under_resolved = any(d > config.SLOPE_MONOTONE_TOL for d in drops)

    diagnostics: Dict[str, Any] = {
        'sample_size': family.size,
        'saturation_cap': math.ceil(config.SATURATION_FRACTION * family.size),
        'saturated_eps': [row.epsilon for row in per_eps if row.saturated],
        'truncated_eps': [row.epsilon for row in per_eps if row.truncated],
        'under_resolved': under_resolved,
        'family': dict(family.diagnostics),
    }
    if under_resolved:
        logger.warning(f"Family '{family.name}': slopes decrease as epsilon shrinks; eps grid looks under-resolved")
    if half_family is not None:
        half = entropy_estimate(half_family, eps_grid, fit_window_fraction, count_kind, n_jobs)
        diagnostics['half_sample_h'] = half.h_estimate
        diagnostics['half_sample_gap'] = abs(half.h_estimate - h_estimate)

    logger.info(f"Entropy estimate for '{family.name}': h={h_estimate:.4f}")
    return EntropyReport(family_name=family.name, base_kind=family.base_kind,
                         eps_grid=[row.epsilon for row in per_eps], per_eps=per_eps, h_estimate=float(h_estimate),
                         count_kind=count_kind, fit_window_fraction=fit_window_fraction, diagnostics=diagnostics)


# =============================================================================
# Finiteness bound
# =============================================================================

def finiteness_bound(m: float, a: float) -> float:
    if m < 0:
        raise NegativeInputError('m', m)
    if a < 0:
        raise NegativeInputError('a', a)
    return m * a


def _ratios(family: DistanceFamily, k: int) -> np.ndarray:
    base = family.level(0).matrix() if family.is_dense else family.level(0).rows(
        np.arange(min(family.size, config.VALIDATION_SAMPLE_ROWS)))
    current = family.matrix(k) if family.is_dense else family.level(k).rows(
        np.arange(min(family.size, config.VALIDATION_SAMPLE_ROWS)))
    positive = base > 0
    return current[positive] / base[positive]


def check_growth_condition(family: DistanceFamily, a: float, b: float = 0.0) -> GrowthCheck:
    """Does d_lambda <= exp(a * lambda + b) * d_0 hold on every sampled pair?"""
    worst_ratio, worst_level = 0.0, None
    for k, lam in enumerate(family.lambda_grid):
        ratios = _ratios(family, k)
        if len(ratios) == 0:
            continue
        ratio = float(ratios.max()) / math.exp(a * lam + b)
        if ratio > worst_ratio:
            worst_ratio, worst_level = ratio, float(lam)
    passed = worst_ratio <= 1.0 + 1e-9
    return GrowthCheck(a=a, b=b, passed=passed, worst_ratio=worst_ratio, worst_level=worst_level)


def growth_exponent(family: DistanceFamily, b: float = 0.0) -> float:
    """Smallest a with d_lambda <= exp(a * lambda + b) * d_0 on the sample."""
    exponent = 0.0
    for k, lam in enumerate(family.lambda_grid):
        if lam <= 0:
            continue
        ratios = _ratios(family, k)
        if len(ratios):
            exponent = max(exponent, (math.log(float(ratios.max())) - b) / lam)
    return exponent


def covering_dimension(space: FiniteMetricSpace, eps_grid: Sequence[float]) -> float:
    """Exponent m of M(d, eps) ~ A eps^-m from greedy covers."""
    eps = np.asarray(eps_grid, dtype=float)
    if len(eps) < 2:
        raise WindowTooSmallError(len(eps), 2)
    counts = np.array([metric_core.greedy_cover_count(space, e) for e in eps], dtype=float)
    slope, _ = np.polyfit(np.log(1.0 / eps), np.log(counts), 1)
    return float(max(slope, 0.0))


# =============================================================================
# Bracket
# =============================================================================

def bracket_check(space, d_index: Optional[int], eps_grid: Sequence[float],
                  size_limit: int = config.EXACT_SIZE_LIMIT) -> List[BracketRow]:
    """Exact M(eps) <= N(eps) <= M(eps/2) per epsilon, with the greedy count alongside."""
    rows = []
    for epsilon in eps_grid:
        cover, packing = metric_core.exact_counts(space, epsilon, size_limit, d_index)
        cover_half, _ = metric_core.exact_counts(space, epsilon / 2.0, size_limit, d_index)
        greedy = metric_core.greedy_packing_count(space, epsilon, d_index)
        row = BracketRow(float(epsilon), cover, packing, cover_half, greedy)
        if not row.holds or not row.greedy_in_bracket:
            logger.warning(f"Bracket fails at eps={epsilon:g}: {row.to_dict()}")
        rows.append(row)
    return rows


# =============================================================================
# Plateau
# =============================================================================

def _pair_sample(n: int, max_pairs: int, seed: int) -> List[Tuple[int, int]]:
    pairs = [(x, y) for x in range(n) for y in range(x + 1, n)]
    if len(pairs) <= max_pairs:
        return pairs
    chosen = np.sort(np.random.default_rng(seed).choice(len(pairs), size=max_pairs, replace=False))
    return [pairs[i] for i in chosen]


def plateau_check(family: DistanceFamily, d_hat: np.ndarray, diameter: float,
                  labels: Optional[Sequence[int]] = None, margin: float = 0.0,
                  tol_plateau: Optional[float] = None, max_pairs: int = config.PLATEAU_PAIR_SAMPLE,
                  seed: int = 0) -> PlateauReport:
    """d_r(x,y) <= 2 d_M(x,y) + tol and d_r2 - d_r1 <= tol for r2 > r1 > d_M(x,y) + margin."""
    if labels is not None and len(set(int(l) for l in labels)) > 1:
        raise NotControllableError(len(set(int(l) for l in labels)))
    tol = config.TOL_PLATEAU_FRACTION * diameter if tol_plateau is None else tol_plateau
    d_hat = np.asarray(d_hat, dtype=float)
    radii = family.lambda_grid

    rows: List[PlateauRow] = []
    checked = passed = 0
    for x, y in _pair_sample(family.size, max_pairs, seed):
        beyond = np.flatnonzero(radii > d_hat[x, y] + margin)
        if len(beyond) == 0 or not np.isfinite(d_hat[x, y]):
            continue
        values = [float(family.row(int(k), x)[y]) for k in beyond]
        pair_ok = True
        for k, value in zip(beyond, values):
            bound = 2.0 * d_hat[x, y] + tol
            ok = value <= bound
            rows.append(PlateauRow(x, y, float(d_hat[x, y]), float(radii[k]), value, float(bound), 'bound', ok))
            pair_ok &= ok
        for (k1, v1), (k2, v2) in zip(zip(beyond[:-1], values[:-1]), zip(beyond[1:], values[1:])):
            ok = v2 - v1 <= tol
            rows.append(PlateauRow(x, y, float(d_hat[x, y]), float(radii[k2]), v2, v1 + tol, 'increment', ok))
            pair_ok &= ok
        checked += 1
        passed += int(pair_ok)

    report = PlateauReport(rows=rows, pairs_checked=checked, pairs_passed=passed, tol_plateau=tol)
    logger.info(f"Plateau check on '{family.name}': {passed}/{checked} pairs pass (tol={tol:.4f})")
    return report


# =============================================================================
# Claims
# =============================================================================

def same_partition(a: Sequence[int], b: Sequence[int]) -> bool:
    """Equal up to relabeling."""
    if len(a) != len(b):
        return False
    forward: Dict[int, int] = {}
    backward: Dict[int, int] = {}
    for p, q in zip(a, b):
        if forward.setdefault(int(p), int(q)) != int(q) or backward.setdefault(int(q), int(p)) != int(p):
            return False
    return True


def evaluate_claim(build: ScenarioBuild, families: Dict[str, DistanceFamily],
                   reports: Dict[str, EntropyReport]) -> Dict[str, Any]:
    """Check a scenario's expected outcome plus its extra checks.

    ``passed`` is None for diagnostic scenarios without an expected value.
    """
    expected = build.scenario.expected
    result: Dict[str, Any] = {'kind': None if expected is None else expected.kind, 'details': {}, 'checks': {}}
    if expected is None:
        result['passed'] = None
        return result

    names = expected.families or [build.primary]
    h = {name: reports[name].h_estimate for name in names if name in reports}
    details = result['details']
    details['h'] = h

    if expected.kind == 'interval':
        value = h[names[0]]
        passed = expected.low <= value <= expected.high
        details.update({'low': expected.low, 'high': expected.high, 'target': expected.target})
    elif expected.kind == 'zero_slope':
        tolerance = config.ZERO_SLOPE_TOL if expected.tolerance is None else expected.tolerance
        # needs at least one unsaturated row per family
        unresolved = [name for name in h if reports[name].per_eps
                      and all(row.saturated for row in reports[name].per_eps)]
        passed = not unresolved and all(value <= tolerance for value in h.values())
        details['tolerance'] = tolerance
        if unresolved:
            details['inconclusive'] = unresolved
            details['reason'] = 'every epsilon row is saturated'
    elif expected.kind == 'monotone_pair':
        upper, lower = names[0], names[1]
        tolerance = config.ZERO_SLOPE_TOL if expected.tolerance is None else expected.tolerance
        passed = h[upper] >= h[lower] - tolerance
        details['tolerance'] = tolerance
    elif expected.kind == 'additivity_pair':
        product, first, second = names[0], names[1], names[2]
        tolerance = config.ADDITIVITY_TOL if expected.tolerance is None else expected.tolerance
        gap = abs(h[product] - h[first] - h[second])
        passed = gap <= tolerance
        details.update({'gap': gap, 'tolerance': tolerance})
    elif expected.kind == 'family_equality':
        left, right = families[names[0]], families[names[1]]
        tolerance = 1e-9 if expected.tolerance is None else expected.tolerance
        grid_gap = float(np.max(np.abs(left.lambda_grid - right.lambda_grid)))
        matrix_gap = max(float(np.max(np.abs(left.matrix(k) - right.matrix(k)))) for k in range(left.n_levels))
        passed = grid_gap <= tolerance and matrix_gap <= tolerance
        details.update({'grid_gap': grid_gap, 'matrix_gap': matrix_gap, 'tolerance': tolerance})
    else:
        passed = False
        details['error'] = f"unknown expected kind '{expected.kind}'"

    for name, check in build.checks.items():
        outcome = check(families, reports)
        result['checks'][name] = outcome
        passed = passed and bool(outcome.get('passed', False))

    result['passed'] = bool(passed)
    level = logger.info if passed else logger.warning
    level(f"Claim '{expected.kind}' for scenario '{build.scenario.name}': {'PASS' if passed else 'FAIL'}")
    return result
