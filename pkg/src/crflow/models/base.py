"""Shared machinery for the closed-form surface families."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import AnsatzNotPositive, BudgetExceeded, TimeOutOfRange
from ..hermitian import MetricField, as_points, is_positive, pullback


@dataclass
class Generator:
    """A deck transformation with its holomorphic Jacobian.

    ``jacobian(points)[:, k, i]`` is ``d gamma_k / d z_i``.
    """

    name: str
    apply: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, points):
        return self.apply(points)


@dataclass
class AnsatzState:
    """Coefficients of the finite-dimensional ansatz at time ``t``."""

    coefficients: np.ndarray
    t: float = 0.0
    names: tuple = ()

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)

    def as_dict(self) -> dict:
        return {name: float(c) for name, c in zip(self.names, self.coefficients)}


@dataclass
class LimitForm:
    """Semi-positive limit of the flow.

    ``kind`` is ``"fixed-time"`` (limit of ``omega(t)`` at the finite
    existence time) or ``"normalized"`` (limit of ``omega(t)/t``).
    ``degenerate`` lists the holomorphic directions on which it vanishes.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: str
    degenerate: str = ""

    def matrix(self, points) -> np.ndarray:
        pts, _ = as_points(points)
        return self.evaluator(pts)


@dataclass
class SampleSet:
    """Points covering a fundamental domain.

    Attributes
    ----------
    points : ndarray
        Chart coordinates, shape ``(N, n)``.
    weights : ndarray
        Chart (Lebesgue) volume attached to each point, for midpoint rules.
    layer : ndarray
        Index of the base layer (radial/height level or base point) of each point.
    circle : ndarray or None
        Parameter in ``[0, 1)`` of the point on the base circle, if any.
    section : ndarray
        Indices of the points making up the fixed-basepoint section, one per layer.
    gluing : list
        ``(i, j, map)`` triples: point ``i`` is glued to ``map(points[j])``.
    involution : ndarray or None
        Sample permutation induced by an extra isometric involution.
    sheet : ndarray or None
        Fibre-grid label of each point; points sharing a label form a copy
        of the base and get extra neighbour edges among themselves.
    """

    points: np.ndarray
    weights: np.ndarray
    layer: np.ndarray
    section: np.ndarray
    circle: Optional[np.ndarray] = None
    gluing: list = field(default_factory=list)
    involution: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    sheet: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)


class SurfaceModel:
    """Base class: a compact quotient ``Gamma \\ U`` of a chart ``U``.

    Subclasses define the chart, the closed-form metric ``omega(t)``, the
    Ricci form of the initial metric and the group data.
    """

    family = "abstract"
    n = 2
    limit_kind = "fixed-time"
    ansatz_names: tuple = ()

    def __init__(self, **params):
        self.params = params

    # -- geometry -------------------------------------------------------
    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def metric(self, points, t: float) -> np.ndarray:
        raise NotImplementedError

    def ricci(self, points) -> np.ndarray:
        """Closed-form Chern-Ricci form of ``omega(0)``, which equals that of every ``omega(t)``."""
        raise NotImplementedError

    def max_existence_time(self) -> float:
        raise NotImplementedError

    def limit_matrix(self, points) -> np.ndarray:
        raise NotImplementedError

    def limit_degenerate(self) -> str:
        return ""

    def generators(self) -> list[Generator]:
        raise NotImplementedError

    def ghost_maps(self) -> list[Callable]:
        """Group elements near the identity used to glue neighbourhoods."""
        raise NotImplementedError

    def sample(self, density=None, seed: int = 0) -> SampleSet:
        raise NotImplementedError

    def circle_coordinate(self, points) -> np.ndarray:
        raise NotImplementedError

    def chart_representative(self, points) -> np.ndarray:
        """Group-equivalent points where the metric coefficients are of order one."""
        return as_points(points)[0]

    def derived(self) -> dict:
        """Derived data (eigenvalues, eigenvectors...) as JSON-friendly values."""
        return {}

    # -- ansatz ---------------------------------------------------------
    def ansatz_initial(self) -> AnsatzState:
        raise NotImplementedError

    def ansatz_velocity(self, state: AnsatzState) -> np.ndarray:
        raise NotImplementedError

    def ansatz_positive(self, coefficients) -> bool:
        raise NotImplementedError

    def ansatz_metric(self, coefficients, points) -> np.ndarray:
        raise NotImplementedError

    # -- convenience ----------------------------------------------------
    def check_time(self, t: float):
        T = self.max_existence_time()
        if not (0.0 <= t < T):
            raise TimeOutOfRange(f"t={t} outside the existence interval [0, {T})")

    def flow_field(self) -> MetricField:
        """The closed-form solution as a time-dependent field on the chart."""
        def ev(points, t):
            return self.metric(points, t)
        return MetricField(ev, self.n, self.contains, (0.0, self.max_existence_time()),
                           0.0, name=f"{self.family}:omega(t)")

    def invariance_defect(self, points, t: float = 0.0) -> float:
        """Largest entrywise change of ``omega(t)`` under pullback by the generators."""
        pts, _ = as_points(points)
        g = self.metric(pts, t)
        worst = 0.0
        for gen in self.generators():
            pulled = pullback(self.metric(gen.apply(pts), t), gen.jacobian(pts))
            scale = np.maximum(1.0, np.max(np.abs(g), axis=(1, 2)))
            worst = max(worst, float(np.max(np.max(np.abs(pulled - g), axis=(1, 2)) / scale)))
        return worst

    def embed(self, points, t: float, normalize: bool = False):
        """Real coordinates and per-axis local scales for neighbour searches.

        The default uses the real chart coordinates weighted by the square
        root of the Riemannian diagonal at each point.
        """
        pts, _ = as_points(points)
        E = np.empty((len(pts), 2 * self.n))
        E[:, 0::2] = pts.real
        E[:, 1::2] = pts.imag
        g = self.metric(pts, t)
        if normalize:
            g = g / t
        d = np.sqrt(2.0 * np.maximum(np.real(np.diagonal(g, axis1=1, axis2=2)), 1e-300))
        W = np.repeat(d, 2, axis=1)
        return E, W

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"


SAMPLE_LIMIT = 2_000_000


def check_budget(count: float):
    """Raise ``BudgetExceeded`` when a sampler would produce more than ``SAMPLE_LIMIT`` points."""
    if count > SAMPLE_LIMIT:
        raise BudgetExceeded(f"{int(count)} sample points requested, budget is {SAMPLE_LIMIT}")


def check_ansatz(model: SurfaceModel, coefficients):
    if not model.ansatz_positive(coefficients):
        raise AnsatzNotPositive(f"{model.family} ansatz {np.asarray(coefficients)} is not positive")


def sphere_points(count: int, dim: int, seed: int = 0, oversample: int = 20) -> np.ndarray:
    """Quasi-uniform points on the unit sphere of R^dim.

    Farthest-point selection from a seeded Gaussian pool.
    """
    rng = np.random.default_rng(seed)
    pool = rng.standard_normal((count * oversample, dim))
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)
    chosen = [0]
    d2 = np.sum((pool - pool[0]) ** 2, axis=1)
    for _ in range(count - 1):
        k = int(np.argmax(d2))
        chosen.append(k)
        d2 = np.minimum(d2, np.sum((pool - pool[k]) ** 2, axis=1))
    return pool[chosen]


def positive_everywhere(matrices) -> bool:
    return bool(np.all(is_positive(matrices)))
