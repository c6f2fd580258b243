"""
Data models for the Entropy Estimation Tool

This module contains the core data structures used throughout the application:
sampled metric spaces and distance families, model manifolds, curves and
anchored control systems, scenario definitions and estimator results.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

import config


# =============================================================================
# Metric spaces
# =============================================================================

@dataclass
class FiniteMetricSpace:
    """A sampled compact metric space.

    Small spaces carry a dense distance matrix. Large ones (n above
    config.DENSE_LIMIT) provide rows on demand through ``row_provider``.
    """

    labels: List[str] = field(default_factory=list)
    dist: Optional[np.ndarray] = None
    coords: Optional[np.ndarray] = None
    row_provider: Optional[Callable[[int], np.ndarray]] = None
    tol: float = config.TOL_METRIC
    name: str = ""

    def __post_init__(self):
        if self.dist is not None:
            self.dist = np.asarray(self.dist, dtype=float)
            if not self.labels and self.dist.ndim == 2:
                self.labels = [str(i) for i in range(self.dist.shape[0])]
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def is_dense(self) -> bool:
        return self.dist is not None

    def row(self, i: int) -> np.ndarray:
        """Distances from point i to every point."""
        if self.dist is not None:
            return self.dist[i]
        return np.asarray(self.row_provider(i), dtype=float)

    def rows(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=int)
        if self.dist is not None:
            return self.dist[indices]
        return np.vstack([self.row(int(i)) for i in indices]) if len(indices) else np.zeros((0, self.size))

    def matrix(self) -> np.ndarray:
        """Dense matrix, materialized from rows when needed."""
        if self.dist is not None:
            return self.dist
        return self.rows(np.arange(self.size))

    def distance(self, i: int, j: int) -> float:
        if self.dist is not None:
            return float(self.dist[i, j])
        return float(self.row(i)[j])


@dataclass
class MetricViolation:
    """One failed metric axiom."""

    kind: str  # 'diagonal', 'symmetry', 'triangle'
    indices: Tuple[int, ...]
    excess: float

    def __str__(self):
        idx = ",".join(str(i) for i in self.indices)
        return f"{self.kind} violation at ({idx}) by {self.excess:.3e}"

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'indices': list(self.indices), 'excess': self.excess}


@dataclass
class ValidationReport:
    """Result of validate_metric."""

    size: int = 0
    tol: float = config.TOL_METRIC
    mode: str = "full"  # 'full' or 'sampled'
    violations: List[MetricViolation] = field(default_factory=list)
    violation_count: int = 0

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def add(self, violation: MetricViolation):
        self.violation_count += 1
        if len(self.violations) < config.MAX_REPORTED_VIOLATIONS:
            self.violations.append(violation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'size': self.size,
            'tol': self.tol,
            'mode': self.mode,
            'violation_count': self.violation_count,
            'violations': [v.to_dict() for v in self.violations],
        }


@dataclass
class CountResult:
    """Covering and packing counts of one matrix at one epsilon."""

    epsilon: float
    greedy_cover: int
    greedy_packing: int
    exact_cover: Optional[int] = None
    exact_packing: Optional[int] = None

    @property
    def has_exact(self) -> bool:
        return self.exact_cover is not None and self.exact_packing is not None

    @property
    def greedy_in_bracket(self) -> Optional[bool]:
        if not self.has_exact:
            return None
        return self.exact_cover <= self.greedy_packing <= self.exact_packing


@dataclass
class PartialPointMap:
    """Index map on a sample; -1 marks points where the map is undefined."""

    name: str
    images: np.ndarray
    inverse_name: Optional[str] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=int)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.images, np.arange(len(self.images))))


# =============================================================================
# Distance families
# =============================================================================

BASE_KINDS = ('map', 'pseudogroup', 'flow', 'curve_bundle', 'synthetic')


@dataclass
class DistanceFamily:
    """Increasing family of distances {d_lambda} on one sample."""

    lambda_grid: np.ndarray
    base_kind: str
    labels: List[str] = field(default_factory=list)
    matrices: Optional[List[np.ndarray]] = None
    row_provider: Optional[Callable[[int, int], np.ndarray]] = None
    coords: Optional[np.ndarray] = None
    tol: float = config.TOL_METRIC
    seed: Optional[int] = None
    name: str = ""
    provenance: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        if self.matrices is not None:
            self.matrices = [np.asarray(m, dtype=float) for m in self.matrices]

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def n_levels(self) -> int:
        return len(self.lambda_grid)

    @property
    def is_dense(self) -> bool:
        return self.matrices is not None

    def row(self, k: int, i: int) -> np.ndarray:
        if self.matrices is not None:
            return self.matrices[k][i]
        return np.asarray(self.row_provider(k, i), dtype=float)

    def matrix(self, k: int) -> np.ndarray:
        if self.matrices is not None:
            return self.matrices[k]
        return np.vstack([self.row(k, i) for i in range(self.size)])

    def level(self, k: int) -> FiniteMetricSpace:
        """The sampled metric space (X, d_lambda_k)."""
        name = f"{self.name}[{self.lambda_grid[k]:g}]"
        if self.matrices is not None:
            return FiniteMetricSpace(labels=self.labels, dist=self.matrices[k],
                                     coords=self.coords, tol=self.tol, name=name)
        return FiniteMetricSpace(labels=self.labels, coords=self.coords, tol=self.tol, name=name,
                                 row_provider=lambda i, _k=k: self.row(_k, i))


# =============================================================================
# Manifolds
# =============================================================================

@dataclass
class ManifoldModel:
    """Flat torus (R^n / cZ^n) or round 2-sphere with its base metric.

    Torus points may be stored unwrapped; distances always use the quotient.
    """

    kind: str  # 'torus' | 'sphere'
    dimension: int = 2
    circumference: float = 1.0
    radius: float = 1.0
    metric_norm: str = "euclidean"  # torus only: 'euclidean' | 'max'
    chart_bound: float = 1e6

    def __post_init__(self):
        if self.kind == "sphere":
            self.dimension = 2

    @property
    def ambient_dim(self) -> int:
        return 3 if self.kind == "sphere" else self.dimension

    @property
    def diameter(self) -> float:
        if self.kind == "sphere":
            return math.pi * self.radius
        half = self.circumference / 2.0
        if self.metric_norm == "max":
            return half
        return half * math.sqrt(self.dimension)

    @property
    def half_diameter_bound(self) -> float:
        """Upper bound n * c / 2 for any torus distance."""
        if self.kind == "sphere":
            return math.pi * self.radius
        return self.dimension * self.circumference / 2.0

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest lattice representative of b - a (torus only)."""
        c = self.circumference
        diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        return diff - c * np.round(diff / c)

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Base distance, broadcasting over leading axes."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "sphere":
            r = self.radius
            a = r * a / np.linalg.norm(a, axis=-1, keepdims=True)
            b = r * b / np.linalg.norm(b, axis=-1, keepdims=True)
            chord = np.linalg.norm(a - b, axis=-1)
            return 2.0 * r * np.arcsin(np.clip(chord / (2.0 * r), 0.0, 1.0))
        c = self.circumference
        diff = np.abs(a - b) % c
        diff = np.minimum(diff, c - diff)
        if self.metric_norm == "max":
            return diff.max(axis=-1)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def pairwise(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        matrix = self.distance(points[:, None, :], points[None, :, :])
        np.fill_diagonal(matrix, 0.0)
        return matrix

    def wrap(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.kind == "sphere":
            return self.retract(points)
        return points % self.circumference

    def retract(self, points: np.ndarray) -> np.ndarray:
        """Project integrator output back onto the model."""
        if self.kind == "sphere":
            points = np.asarray(points, dtype=float)
            return self.radius * points / np.linalg.norm(points, axis=-1, keepdims=True)
        return points

    def lift_near(self, points: np.ndarray, reference: np.ndarray) -> np.ndarray:
        """Representative of ``points`` closest to ``reference`` in chart coordinates."""
        points = np.asarray(points, dtype=float)
        if self.kind == "sphere":
            return points
        c = self.circumference
        return points + c * np.round((np.asarray(reference, dtype=float) - points) / c)

    def in_chart(self, points: np.ndarray) -> bool:
        points = np.asarray(points, dtype=float)
        return bool(np.all(np.isfinite(points)) and np.all(np.abs(points) <= self.chart_bound))

    # -- samplers ------------------------------------------------------------

    def grid(self, per_axis: int) -> np.ndarray:
        """Uniform rational grid, lexicographic order (torus)."""
        axis = np.arange(per_axis) * (self.circumference / per_axis)
        mesh = np.meshgrid(*([axis] * self.dimension), indexing='ij')
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def fibonacci(self, n: int) -> np.ndarray:
        """Fibonacci lattice on the sphere."""
        golden = math.pi * (3.0 - math.sqrt(5.0))
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        rho = np.sqrt(1.0 - z * z)
        theta = golden * np.arange(n)
        return self.radius * np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=-1)

    def latitude_bands(self, n_bands: int, per_band: int,
                       include_poles: bool = True) -> Tuple[np.ndarray, List[int]]:
        """Points on n_bands latitude circles (plus poles) with their band labels.

        Band b sits at colatitude pi*(b+1)/(n_bands+1); longitudes are offset
        per band by the golden angle. Poles get labels n_bands and n_bands+1.
        """
        golden = math.pi * (3.0 - math.sqrt(5.0))
        points, labels = [], []
        for b in range(n_bands):
            colat = math.pi * (b + 1) / (n_bands + 1)
            lon = golden * b + 2.0 * math.pi * np.arange(per_band) / per_band
            ring = np.stack([math.sin(colat) * np.cos(lon),
                             math.sin(colat) * np.sin(lon),
                             np.full(per_band, math.cos(colat))], axis=-1)
            points.append(self.radius * ring)
            labels.extend([b] * per_band)
        if include_poles:
            points.append(np.array([[0.0, 0.0, self.radius], [0.0, 0.0, -self.radius]]))
            labels.extend([n_bands, n_bands + 1])
        return np.vstack(points), labels

    def to_space(self, coords: np.ndarray, labels: Optional[List[str]] = None,
                 name: str = "", tol: float = config.TOL_METRIC) -> FiniteMetricSpace:
        coords = np.asarray(coords, dtype=float)
        if labels is None:
            labels = [str(i) for i in range(len(coords))]
        if len(coords) <= config.DENSE_LIMIT:
            return FiniteMetricSpace(labels=labels, dist=self.pairwise(coords), coords=coords,
                                     tol=tol, name=name)
        return FiniteMetricSpace(labels=labels, coords=coords, tol=tol, name=name,
                                 row_provider=lambda i: self.distance(coords[i], coords))

    def describe(self) -> Dict[str, Any]:
        if self.kind == "sphere":
            return {'kind': 'sphere', 'radius': self.radius}
        return {'kind': 'torus', 'dimension': self.dimension,
                'circumference': self.circumference, 'metric_norm': self.metric_norm}


# =============================================================================
# Curves and control systems
# =============================================================================

@dataclass
class Curve:
    """Time-discretized curve on the uniform grid of [0, 1].

    ``controls`` holds one control vector per time interval when the curve was
    produced by a control system.
    """

    times: np.ndarray
    points: np.ndarray
    controls: Optional[np.ndarray] = None
    speed_bound: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.controls is not None:
            self.controls = np.asarray(self.controls, dtype=float)

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def is_constant(self) -> bool:
        return bool(np.allclose(self.points, self.points[0], atol=config.SNAP_TOL, rtol=0.0))


@dataclass
class CurveBundle:
    """Finite sample of A_r(x): curves from one base point, constant curve first."""

    base_index: int
    radius: float
    curves: List[Curve] = field(default_factory=list)

    _stacked: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def stacked(self) -> np.ndarray:
        """Points of all curves as an (m, T+1, D) array."""
        if self._stacked is None:
            self._stacked = np.stack([c.points for c in self.curves])
        return self._stacked

    def __len__(self):
        return len(self.curves)


@dataclass
class ControlNorm:
    """Minkowski norm F on the control space R^k.

    Quadratic norms are F(u) = sqrt(u^T Q u); convex norms wrap a callable
    evaluated along the last axis.
    """

    kind: str  # 'quadratic' | 'convex'
    dim: int
    matrix: Optional[np.ndarray] = None
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        if self.matrix is not None:
            self.matrix = np.asarray(self.matrix, dtype=float)

    @classmethod
    def euclidean(cls, k: int) -> "ControlNorm":
        return cls(kind='quadratic', dim=k, matrix=np.eye(k), label='euclidean')

    @classmethod
    def quadratic(cls, q: np.ndarray, label: str = "quadratic") -> "ControlNorm":
        q = np.asarray(q, dtype=float)
        return cls(kind='quadratic', dim=q.shape[0], matrix=q, label=label)

    @classmethod
    def convex(cls, function: Callable[[np.ndarray], np.ndarray], k: int,
               label: str = "convex") -> "ControlNorm":
        return cls(kind='convex', dim=k, function=function, label=label)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.dim == 0:
            return np.zeros(u.shape[:-1])
        if self.kind == 'quadratic':
            quad = np.einsum('...i,ij,...j->...', u, self.matrix, u)
            return np.sqrt(np.maximum(quad, 0.0))
        return np.asarray(self.function(u), dtype=float)

    def scaled(self, c: float) -> "ControlNorm":
        """The norm c*F."""
        label = f"{c:g}*{self.label}"
        if self.kind == 'quadratic':
            return ControlNorm(kind='quadratic', dim=self.dim, matrix=self.matrix * (c * c), label=label)
        base = self.function
        return ControlNorm(kind='convex', dim=self.dim, function=lambda u: c * base(u), label=label)

    def describe(self) -> Dict[str, Any]:
        info: Dict[str, Any] = {'kind': self.kind, 'dim': self.dim, 'label': self.label}
        if self.matrix is not None:
            info['matrix'] = self.matrix.tolist()
        return info


VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass
class AnchoredSystem:
    """Anchored bundle (A, M, #) with a Finsler norm on the controls.

    Each generator maps an (n, D) array of points to the (n, D) values of the
    vector field #(x, e_i).
    """

    manifold: ManifoldModel
    generators: List[VectorField]
    control_norm: ControlNorm
    symmetric_controls: bool = True
    label: str = ""

    @property
    def control_dim(self) -> int:
        return len(self.generators)

    def anchor_matrix(self, points: np.ndarray) -> np.ndarray:
        """B(x) with columns #(x, e_i): shape (n, D, k)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.generators:
            return np.zeros(points.shape + (0,))
        return np.stack([g(points) for g in self.generators], axis=-1)

    def velocity(self, points: np.ndarray, controls: np.ndarray) -> np.ndarray:
        """sum_i u_i #(x, e_i) for matching rows of points and controls."""
        points = np.atleast_2d(points)
        if not self.generators:
            return np.zeros_like(points)
        return np.einsum('ndk,nk->nd', self.anchor_matrix(points), np.atleast_2d(controls))

    def with_norm(self, norm: ControlNorm) -> "AnchoredSystem":
        return AnchoredSystem(manifold=self.manifold, generators=list(self.generators),
                              control_norm=norm, symmetric_controls=self.symmetric_controls,
                              label=self.label)


@dataclass
class AdmissibleDistance:
    """Shortest sampled admissible path between two sample points."""

    value: float
    reachable: bool
    path: List[int] = field(default_factory=list)


@dataclass
class EdgeGeometry:
    """Witness of a graph edge: prefix of curve ``curve_index`` from ``source`` up to ``sample``."""

    source: int
    target: int
    curve_index: int
    sample: int
    length: float


@dataclass
class AdmissibleGraph:
    """Sampled reachability graph of an anchored system on a point sample.

    ``weights[p, q]`` is the shortest sampled admissible connection (inf when
    none); ``witnesses[(p, q)]`` the curve prefix realizing it, stored from the
    end it was sampled at. ``prefixes[p]`` holds the probe curves from p as an
    (m, T+1, D) array and ``cumulative[p]`` their running lengths.
    """

    system: "AnchoredSystem"
    coords: np.ndarray
    radius: float
    eps_link: float
    weights: np.ndarray
    witnesses: Dict[Tuple[int, int], EdgeGeometry] = field(default_factory=dict)
    prefixes: List[np.ndarray] = field(default_factory=list)
    cumulative: List[np.ndarray] = field(default_factory=list)
    labels: Optional[np.ndarray] = None
    penalty: Optional[float] = None

    @property
    def size(self) -> int:
        return len(self.coords)

    @property
    def gap_cost(self) -> float:
        """Length charged for closing the gap to a linked point."""
        return self.eps_link if self.penalty is None else self.penalty

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


@dataclass
class MinkowskiReport:
    min_eigenvalues: np.ndarray
    directions: np.ndarray
    passed: bool
    tol: float = config.MINKOWSKI_EIG_TOL

    @property
    def worst_direction(self) -> np.ndarray:
        return self.directions[int(np.argmin(self.min_eigenvalues))]


# =============================================================================
# Scenarios
# =============================================================================

EXPECTED_KINDS = ('interval', 'zero_slope', 'monotone_pair', 'additivity_pair', 'family_equality')


@dataclass
class ExpectedOutcome:
    """Target of a scenario: a numeric interval or a property tag."""

    kind: str
    low: Optional[float] = None
    high: Optional[float] = None
    target: Optional[float] = None
    tolerance: Optional[float] = None
    families: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'low': self.low, 'high': self.high, 'target': self.target,
                'tolerance': self.tolerance, 'families': list(self.families)}


@dataclass
class Scenario:
    name: str
    manifold: Optional[ManifoldModel]
    family_builder: str
    target_claim: str
    expected: Optional[ExpectedOutcome]
    seed: int
    parameters: Dict[str, Any] = field(default_factory=dict)
    description: str = ""

    def manifest(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'description': self.description,
            'manifold': self.manifold.describe() if self.manifold else None,
            'family_builder': self.family_builder,
            'target_claim': self.target_claim,
            'expected': self.expected.to_dict() if self.expected else None,
            'seed': self.seed,
            'parameters': dict(self.parameters),
        }


# =============================================================================
# Estimator results
# =============================================================================

@dataclass
class EpsilonSlope:
    """Growth of ln N(d_lambda, eps) for one epsilon."""

    epsilon: float
    lambdas: np.ndarray
    counts: np.ndarray
    in_window: np.ndarray
    slope: float = 0.0
    intercept: float = 0.0
    residual: float = 0.0
    saturated: bool = False
    truncated: bool = False

    @property
    def ln_counts(self) -> np.ndarray:
        return np.log(np.asarray(self.counts, dtype=float))

    @property
    def window(self) -> Tuple[float, float]:
        lam = self.lambdas[self.in_window]
        return (float(lam[0]), float(lam[-1])) if len(lam) else (float('nan'), float('nan'))


@dataclass
class EntropyReport:
    family_name: str
    base_kind: str
    eps_grid: List[float]
    per_eps: List[EpsilonSlope]
    h_estimate: float
    count_kind: str = "packing"
    fit_window_fraction: float = config.FIT_WINDOW_FRACTION
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    claim_check: Optional[Dict[str, Any]] = None

    @property
    def slopes(self) -> List[float]:
        return [row.slope for row in self.per_eps]


@dataclass
class BracketRow:
    epsilon: float
    cover: int
    packing: int
    cover_half: int
    greedy: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.cover <= self.packing <= self.cover_half

    @property
    def greedy_in_bracket(self) -> Optional[bool]:
        if self.greedy is None:
            return None
        return self.cover <= self.greedy <= self.packing

    def to_dict(self) -> Dict[str, Any]:
        return {'epsilon': self.epsilon, 'cover': self.cover, 'packing': self.packing,
                'cover_half': self.cover_half, 'greedy': self.greedy, 'holds': self.holds}


@dataclass
class GrowthCheck:
    """Does d_lambda <= exp(a*lambda + b) * d hold on the sample?"""

    a: float
    b: float
    passed: bool
    worst_ratio: float
    worst_level: Optional[float] = None


@dataclass
class PlateauRow:
    x: int
    y: int
    d_hat: float
    radius: float
    d_r: float
    bound: float
    kind: str  # 'bound' | 'increment'
    passed: bool


@dataclass
class PlateauReport:
    rows: List[PlateauRow]
    pairs_checked: int
    pairs_passed: int
    tol_plateau: float
    required_rate: float = config.PLATEAU_PASS_RATE

    @property
    def pass_rate(self) -> float:
        return 1.0 if self.pairs_checked == 0 else self.pairs_passed / self.pairs_checked

    @property
    def passed(self) -> bool:
        return self.pass_rate >= self.required_rate

    def to_dict(self) -> Dict[str, Any]:
        failing = [row for row in self.rows if not row.passed]
        return {
            'pairs_checked': self.pairs_checked,
            'pairs_passed': self.pairs_passed,
            'pass_rate': self.pass_rate,
            'required_rate': self.required_rate,
            'tol_plateau': self.tol_plateau,
            'passed': self.passed,
            'failing_rows': [{'x': r.x, 'y': r.y, 'radius': r.radius, 'd_r': r.d_r, 'bound': r.bound,
                              'kind': r.kind} for r in failing[:config.MAX_REPORTED_VIOLATIONS]],
        }


# =============================================================================
# Scenario builds
# =============================================================================

FamilyBuilder = Callable[[Dict[str, "DistanceFamily"], int], "DistanceFamily"]
ClaimCheck = Callable[[Dict[str, "DistanceFamily"], Dict[str, "EntropyReport"]], Dict[str, Any]]


@dataclass
class ScenarioBuild:
    """Everything a run needs: the sample, the family builders (in dependency
    order), the epsilon grid, and scenario-specific checks."""

    scenario: Scenario
    space: FiniteMetricSpace
    eps_grid: List[float]
    builders: Dict[str, FamilyBuilder]
    primary: str
    half_builders: Dict[str, FamilyBuilder] = field(default_factory=dict)
    checks: Dict[str, ClaimCheck] = field(default_factory=dict)
    notes: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def build_families(self, n_jobs: int = 1) -> Dict[str, "DistanceFamily"]:
        families: Dict[str, DistanceFamily] = {}
        for name, builder in self.builders.items():
            families[name] = builder(families, n_jobs)
        return families


@dataclass
class SuiteResult:
    """One brute-force oracle suite of the self test."""

    name: str
    cases: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, message: str):
        self.failures.append(message)

    def lines(self) -> List[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [f"[{status}] {self.name}: {self.cases - len(self.failures)}/{self.cases} case(s)"]
        out.extend(f"    {message}" for message in self.failures[:config.MAX_REPORTED_VIOLATIONS])
        if len(self.failures) > config.MAX_REPORTED_VIOLATIONS:
            out.append(f"    ... {len(self.failures) - config.MAX_REPORTED_VIOLATIONS} more")
        return out


@dataclass
class SelftestResult:
    seed: int
    suites: List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> List[str]:
        out = [f"selftest seed={self.seed}"]
        for suite in self.suites:
            out.extend(suite.lines())
        out.append("selftest: " + ("PASS" if self.passed else "FAIL"))
        return out


# =============================================================================
# CLI configuration
# =============================================================================

@dataclass
class RunConfig:
    """Effective configuration of one scenario run."""

    scenario: str = ""
    seed: Optional[int] = None
    eps_grid: Optional[List[float]] = None
    grid_size: Optional[int] = None
    n_max: Optional[int] = None
    r_max: Optional[float] = None
    n_curves: Optional[int] = None
    n_segments: Optional[int] = None
    dt: Optional[float] = None
    fit_window_fraction: float = config.FIT_WINDOW_FRACTION
    count_kind: str = "packing"
    output_dir: str = ""
    n_jobs: int = config.N_JOBS
    overrides: Dict[str, Any] = field(default_factory=dict)

    SCENARIO_FIELDS = ('grid_size', 'n_max', 'r_max', 'n_curves', 'n_segments', 'dt')

    def scenario_overrides(self) -> Dict[str, Any]:
        merged = dict(self.overrides)
        for name in self.SCENARIO_FIELDS:
            value = getattr(self, name)
            if value is not None:
                merged[name] = value
        return merged

    def to_dict(self) -> Dict[str, Any]:
        """Result-relevant configuration (worker count and output location excluded)."""
        return {
            'scenario': self.scenario,
            'seed': self.seed,
            'eps_grid': None if self.eps_grid is None else [float(e) for e in self.eps_grid],
            'grid_size': self.grid_size,
            'n_max': self.n_max,
            'r_max': self.r_max,
            'n_curves': self.n_curves,
            'n_segments': self.n_segments,
            'dt': self.dt,
            'fit_window_fraction': self.fit_window_fraction,
            'count_kind': self.count_kind,
            'overrides': {k: self.overrides[k] for k in sorted(self.overrides)},
        }
