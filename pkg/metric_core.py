"""
Finite metric spaces: validation, covering and packing counts.

Ball membership is non-strict (d <= eps) and separation is strict (d > eps).
Production counts are greedy; exhaustive counts exist for small spaces and
serve as the oracle in tests and in the selftest suites.
"""

from functools import lru_cache
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from data_models import DistanceFamily, FiniteMetricSpace, MetricViolation, ValidationReport
from exceptions import (
    EmptySpaceError, EmptySubsetError, IndexOutOfRangeError, MetricValidationError,
    NegativeEntryError, NonFiniteEntryError, NonSquareMatrixError, TooLargeError
)
from logger import get_logger

logger = get_logger(__name__)

SpaceLike = Union[FiniteMetricSpace, DistanceFamily]


def _resolve(space: SpaceLike, d_index: Optional[int]) -> FiniteMetricSpace:
    """Pick matrix ``d_index`` of a family, or the space itself."""
    if isinstance(space, DistanceFamily):
        return space.level(0 if d_index is None else d_index)
    return space


# =============================================================================
# Validation
# =============================================================================

def _check_entries(matrix: np.ndarray, tol: float):
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSquareMatrixError(matrix.shape)
    bad = np.argwhere(~np.isfinite(matrix))
    if len(bad):
        raise NonFiniteEntryError(int(bad[0][0]), int(bad[0][1]))
    negative = np.argwhere(matrix < -tol)
    if len(negative):
        i, j = int(negative[0][0]), int(negative[0][1])
        raise NegativeEntryError(i, j, float(matrix[i, j]))


def _triangle_full(matrix: np.ndarray, tol: float, report: ValidationReport):
    n = matrix.shape[0]
    for j in range(n):
        # excess[i, k] = d(i,k) - d(i,j) - d(j,k)
        excess = matrix - (matrix[:, j:j + 1] + matrix[j:j + 1, :])
        for i, k in np.argwhere(excess > tol):
            report.add(MetricViolation('triangle', (int(i), j, int(k)), float(excess[i, k])))


def _triangle_sampled(space: FiniteMetricSpace, tol: float, report: ValidationReport):
    n = space.size
    rng = np.random.default_rng(0)
    count = min(n, config.VALIDATION_SAMPLE_ROWS)
    rows_i = np.sort(rng.choice(n, size=count, replace=False))
    pivots = np.sort(rng.choice(n, size=count, replace=False))
    pivot_rows = space.rows(pivots)
    for i in rows_i:
        row_i = space.row(int(i))
        for pivot, row_j in zip(pivots, pivot_rows):
            excess = row_i - (row_i[pivot] + row_j)
            for k in np.flatnonzero(excess > tol):
                report.add(MetricViolation('triangle', (int(i), int(pivot), int(k)), float(excess[k])))


def validate_metric(dist: Union[np.ndarray, FiniteMetricSpace],
                    tol: Optional[float] = None) -> ValidationReport:
    """Check the metric axioms at tolerance ``tol``.

    Dense inputs up to config.VALIDATION_FULL_LIMIT points are checked
    exhaustively. Larger or lazy spaces get the diagonal and symmetry checks on
    sampled rows plus a triangle check over sampled (row, pivot) pairs.
    """
    if isinstance(dist, FiniteMetricSpace):
        space = dist
        tol = space.tol if tol is None else tol
    else:
        matrix = np.asarray(dist, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise NonSquareMatrixError(matrix.shape)
        space = FiniteMetricSpace(labels=[str(i) for i in range(matrix.shape[0])], dist=matrix)
        tol = config.TOL_METRIC if tol is None else tol

    n = space.size
    if space.is_dense and n <= config.VALIDATION_FULL_LIMIT:
        matrix = space.dist
        _check_entries(matrix, tol)
        report = ValidationReport(size=n, tol=tol, mode="full")
        for i in np.flatnonzero(np.abs(np.diag(matrix)) > tol):
            report.add(MetricViolation('diagonal', (int(i),), float(abs(matrix[i, i]))))
        asym = np.abs(matrix - matrix.T)
        for i, j in np.argwhere(np.triu(asym, k=1) > tol):
            report.add(MetricViolation('symmetry', (int(i), int(j)), float(asym[i, j])))
        _triangle_full(matrix, tol, report)
    else:
        report = ValidationReport(size=n, tol=tol, mode="sampled")
        rng = np.random.default_rng(1)
        sample = np.sort(rng.choice(n, size=min(n, config.VALIDATION_SAMPLE_ROWS), replace=False))
        sample_rows = space.rows(sample)
        _check_entries(sample_rows[:, sample], tol)
        for row_index, i in enumerate(sample):
            if abs(sample_rows[row_index, i]) > tol:
                report.add(MetricViolation('diagonal', (int(i),), float(abs(sample_rows[row_index, i]))))
        block = sample_rows[:, sample]
        asym = np.abs(block - block.T)
        for a, b in np.argwhere(np.triu(asym, k=1) > tol):
            report.add(MetricViolation('symmetry', (int(sample[a]), int(sample[b])), float(asym[a, b])))
        _triangle_sampled(space, tol, report)

    if not report.ok:
        logger.warning(f"Metric validation of '{space.name or 'matrix'}' found "
                       f"{report.violation_count} violation(s), first: {report.violations[0]}")
    return report


def require_metric(space: FiniteMetricSpace, context: str) -> ValidationReport:
    """validate_metric that raises MetricValidationError on failure."""
    report = validate_metric(space)
    if not report.ok:
        raise MetricValidationError(context, report.violations)
    return report


# =============================================================================
# Greedy counts
# =============================================================================

def greedy_cover_count(space: SpaceLike, epsilon: float, d_index: Optional[int] = None) -> int:
    """Greedy ball cover: lowest-index uncovered point becomes the next center."""
    space = _resolve(space, d_index)
    if space.size == 0:
        raise EmptySpaceError("greedy_cover_count")
    uncovered = np.ones(space.size, dtype=bool)
    count = 0
    while uncovered.any():
        center = int(np.argmax(uncovered))
        uncovered &= space.row(center) > epsilon
        count += 1
    return count


def farthest_point_radii(space: FiniteMetricSpace, stop_radius: float = 0.0,
                         limit: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Farthest-point traversal from point 0.

    Returns (order, radii): radii[k] is the distance of the k-th chosen point to
    the earlier ones (radii[0] = inf), nonincreasing. The traversal stops once
    the next radius is <= stop_radius or ``limit`` points are chosen. For any
    eps >= stop_radius the greedy eps-packing is order[radii > eps].
    """
    n = space.size
    if n == 0:
        raise EmptySpaceError("greedy_packing_count")
    limit = n if limit is None else min(limit, n)
    order = [0]
    radii = [np.inf]
    min_dist = space.row(0).astype(float).copy()
    min_dist[0] = -np.inf
    while len(order) < limit:
        candidate = int(np.argmax(min_dist))
        radius = float(min_dist[candidate])
        if radius <= stop_radius:
            break
        order.append(candidate)
        radii.append(radius)
        np.minimum(min_dist, space.row(candidate), out=min_dist)
        min_dist[candidate] = -np.inf
    return np.asarray(order, dtype=int), np.asarray(radii, dtype=float)


def greedy_packing_count(space: SpaceLike, epsilon: float, d_index: Optional[int] = None) -> int:
    """Size of the farthest-point greedy maximal eps-separated set."""
    space = _resolve(space, d_index)
    _, radii = farthest_point_radii(space, stop_radius=epsilon)
    return int(np.count_nonzero(radii > epsilon))


def greedy_packing_counts(space: SpaceLike, eps_grid: Sequence[float], limit: Optional[int] = None,
                          d_index: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy packing counts for every epsilon from a single traversal.

    Returns (counts, truncated); truncated[e] is True when the traversal hit
    ``limit`` before separation at eps_grid[e] ran out, so the count is a
    lower bound.
    """
    space = _resolve(space, d_index)
    eps = np.asarray(eps_grid, dtype=float)
    order, radii = farthest_point_radii(space, stop_radius=float(eps.min()), limit=limit)
    counts = np.array([np.count_nonzero(radii > e) for e in eps], dtype=int)
    truncated = np.zeros(len(eps), dtype=bool)
    if limit is not None and len(order) >= min(limit, space.size) and len(order) < space.size:
        truncated = counts >= len(order)
    return counts, truncated


# =============================================================================
# Exhaustive counts
# =============================================================================

def _bitmasks(matrix: np.ndarray, epsilon: float) -> List[int]:
    """close[i] = bitmask of points within eps of i (i included)."""
    masks = []
    for row in matrix <= epsilon:
        mask = 0
        for j in np.flatnonzero(row):
            mask |= 1 << int(j)
        masks.append(mask)
    return masks


def _min_cover(balls: List[int], n: int) -> int:
    full = (1 << n) - 1
    for size in range(1, n + 1):
        for centers in combinations(range(n), size):
            covered = 0
            for c in centers:
                covered |= balls[c]
            if covered == full:
                return size
    return n


def _max_packing(close: List[int], n: int) -> int:
    @lru_cache(maxsize=None)
    def best(mask: int) -> int:
        if mask == 0:
            return 0
        v = (mask & -mask).bit_length() - 1
        without = best(mask & ~(1 << v))
        with_v = 1 + best(mask & ~close[v] & ~(1 << v))
        return max(without, with_v)

    return best((1 << n) - 1)


def exact_counts(space: SpaceLike, epsilon: float, size_limit: int = config.EXACT_SIZE_LIMIT,
                 d_index: Optional[int] = None) -> Tuple[int, int]:
    """(minimum cover by sample-centered eps-balls, maximum eps-separated set)."""
    space = _resolve(space, d_index)
    n = space.size
    if n == 0:
        raise EmptySpaceError("exact_counts")
    if n > size_limit:
        raise TooLargeError(n, size_limit)
    masks = _bitmasks(space.matrix(), epsilon)
    return _min_cover(masks, n), _max_packing(masks, n)


# =============================================================================
# Constructions
# =============================================================================

def max_combine(space_a: FiniteMetricSpace, space_b: FiniteMetricSpace, name: str = "",
                validate: bool = True) -> FiniteMetricSpace:
    """Product space with d((a,b),(a',b')) = max(d_a(a,a'), d_b(b,b')).

    Point (i, j) gets index i * n_b + j. The factors may differ in size; each
    must pass validate_metric unless ``validate`` is False.
    """
    n_a, n_b = space_a.size, space_b.size
    if n_a == 0 or n_b == 0:
        raise EmptySpaceError("max_combine")
    if validate:
        require_metric(space_a, "max_combine first factor")
        require_metric(space_b, "max_combine second factor")
    labels = [f"({la},{lb})" for la in space_a.labels for lb in space_b.labels]
    coords = None
    if space_a.coords is not None and space_b.coords is not None:
        coords = np.hstack([np.repeat(space_a.coords, n_b, axis=0), np.tile(space_b.coords, (n_a, 1))])
    tol = max(space_a.tol, space_b.tol)
    name = name or f"{space_a.name}x{space_b.name}"

    if space_a.is_dense and space_b.is_dense and n_a * n_b <= config.DENSE_LIMIT:
        a, b = space_a.dist, space_b.dist
        dist = np.maximum(a[:, None, :, None], b[None, :, None, :]).reshape(n_a * n_b, n_a * n_b)
        return FiniteMetricSpace(labels=labels, dist=dist, coords=coords, tol=tol, name=name)

    def row(index: int) -> np.ndarray:
        i, j = divmod(index, n_b)
        return np.maximum(np.repeat(space_a.row(i), n_b), np.tile(space_b.row(j), n_a))

    return FiniteMetricSpace(labels=labels, coords=coords, row_provider=row, tol=tol, name=name)


def restrict(space: FiniteMetricSpace, indices: Iterable[int]) -> FiniteMetricSpace:
    """Induced submetric on the listed points (in the listed order)."""
    idx = np.asarray(list(indices), dtype=int)
    if len(idx) == 0:
        raise EmptySubsetError()
    if idx.min() < 0 or idx.max() >= space.size:
        bad = int(idx[(idx < 0) | (idx >= space.size)][0])
        raise IndexOutOfRangeError("restrict", bad, space.size)
    labels = [space.labels[i] for i in idx]
    coords = None if space.coords is None else space.coords[idx]
    name = f"{space.name}|{len(idx)}"
    if space.is_dense:
        return FiniteMetricSpace(labels=labels, dist=space.dist[np.ix_(idx, idx)], coords=coords,
                                 tol=space.tol, name=name)
    return FiniteMetricSpace(labels=labels, coords=coords, tol=space.tol, name=name,
                             row_provider=lambda i: space.row(int(idx[i]))[idx])
