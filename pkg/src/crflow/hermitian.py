"""Hermitian forms on complex charts and finite-difference curvature.

A form is stored as the matrix ``G[i, j] = g_{i jbar}``, the coefficient of
``sqrt(-1) dz_i ^ dzbar_j``. The associated Riemannian length of a tangent
vector with holomorphic components ``v`` is ``2 * v^T G conj(v)``.

All evaluators are vectorised: points are arrays of shape ``(N, n)`` and
fields return matrices of shape ``(N, n, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveDeterminant, SingularMetric, StencilOutOfDomain

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class ComplexPoint:
    """A point of a complex chart.

    Parameters
    ----------
    coords : array_like
        Complex coordinates, shape ``(n,)``.
    chart : str
        Name of the chart the coordinates refer to.
    """

    coords: np.ndarray
    chart: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=complex).ravel())

    @property
    def n(self) -> int:
        return self.coords.size


def as_points(p) -> tuple[np.ndarray, bool]:
    """Return ``(points, single)`` with points of shape ``(N, n)``."""
    if isinstance(p, ComplexPoint):
        return p.coords[None, :], True
    arr = np.asarray(p, dtype=complex)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError(f"points must have shape (n,) or (N, n), got {arr.shape}")
    return arr, False


class HermitianForm:
    """A (batch of) Hermitian ``n x n`` matrices representing (1,1)-forms.

    Parameters
    ----------
    matrix : array_like
        Complex array of shape ``(..., n, n)``.
    check : bool
        Validate Hermitian symmetry to ``HERMITIAN_TOL`` (relative to the
        entry scale when entries exceed one).
    """

    def __init__(self, matrix, check: bool = True):
        g = np.asarray(matrix, dtype=complex)
        if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
            raise ValueError(f"expected (..., n, n) matrices, got {g.shape}")
        if check:
            asym = np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2))), initial=0.0)
            scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
            if asym > HERMITIAN_TOL * scale:
                raise ValueError(f"matrix is not Hermitian (defect {asym:.3e})")
        self.matrix = g

    @property
    def n(self) -> int:
        return self.matrix.shape[-1]

    @property
    def shape(self):
        return self.matrix.shape[:-2]

    def __getitem__(self, idx) -> "HermitianForm":
        return HermitianForm(self.matrix[idx], check=False)

    def __add__(self, other):
        return HermitianForm(self.matrix + _mat(other), check=False)

    def __sub__(self, other):
        return HermitianForm(self.matrix - _mat(other), check=False)

    def __mul__(self, c: float):
        return HermitianForm(self.matrix * c, check=False)

    __rmul__ = __mul__

    def __neg__(self):
        return HermitianForm(-self.matrix, check=False)

    def det(self) -> np.ndarray:
        """Real determinant of the coefficient matrix."""
        return det_g(self)

    def is_positive(self) -> np.ndarray:
        return is_positive(self)

    def trace_with(self, alpha) -> np.ndarray:
        """Trace of ``alpha`` with respect to this form."""
        return trace_with(self, alpha)

    def inverse(self) -> np.ndarray:
        """Return ``G^{-1}``; raises :class:`SingularMetric` if ill-conditioned."""
        cond = np.linalg.cond(self.matrix)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
            raise SingularMetric("metric matrix is singular to working precision")
        return np.linalg.inv(self.matrix)

    def norm2(self, v) -> np.ndarray:
        """Riemannian squared length ``2 Re(v^T G conj(v))`` of holomorphic vectors."""
        v = np.asarray(v, dtype=complex)
        return 2.0 * np.real(np.einsum("...i,...ij,...j->...", v, self.matrix, np.conj(v)))

    def __repr__(self):
        return f"HermitianForm(shape={self.shape}, n={self.n})"


def _mat(g) -> np.ndarray:
    return g.matrix if isinstance(g, HermitianForm) else np.asarray(g, dtype=complex)


def det_g(g) -> np.ndarray:
    """Determinant of ``G``; real for Hermitian input."""
    return np.real(np.linalg.det(_mat(g)))


def is_positive(g) -> np.ndarray:
    """True where the smallest eigenvalue of ``G`` is strictly positive."""
    return np.linalg.eigvalsh(_mat(g))[..., 0] > 0


def trace_with(omega, alpha) -> np.ndarray:
    """``tr_omega alpha = g^{i jbar} alpha_{i jbar} = tr(G^{-1} A)``.

    Satisfies ``trace_with(omega, c * omega) == n * c``.
    """
    ginv = HermitianForm(_mat(omega), check=False).inverse()
    return np.real(np.einsum("...ij,...ji->...", ginv, _mat(alpha)))


class MetricField:
    """A time-dependent Hermitian metric on a chart.

    Parameters
    ----------
    evaluator : callable
        ``evaluator(points, t)`` returning ``(N, n, n)`` matrices.
    n : int
        Complex dimension.
    contains : callable, optional
        ``contains(points)`` returning a boolean mask of chart membership.
    time_domain : tuple
        Half-open interval ``[t0, t1)`` on which the field is defined.
    t : float
        Default evaluation time used when no time is passed.
    """

    def __init__(self, evaluator: Callable, n: int, contains: Optional[Callable] = None,
                 time_domain=(0.0, np.inf), t: float = 0.0, name: str = ""):
        self.evaluator = evaluator
        self.n = int(n)
        self.contains = contains if contains is not None else (lambda pts: np.ones(len(pts), bool))
        self.time_domain = tuple(time_domain)
        self.t = float(t)
        self.name = name

    def matrix(self, points, t=None) -> np.ndarray:
        pts, _ = as_points(points)
        return self.evaluator(pts, self.t if t is None else float(t))

    def __call__(self, points, t=None) -> HermitianForm:
        pts, single = as_points(points)
        g = HermitianForm(self.matrix(pts, t))
        return g[0] if single else g

    def at(self, t: float) -> "MetricField":
        """Copy of the field whose default time is ``t``."""
        return MetricField(self.evaluator, self.n, self.contains, self.time_domain, t, self.name)

    def __repr__(self):
        return f"MetricField({self.name!r}, n={self.n}, t={self.t})"


# ---------------------------------------------------------------------------
# finite differences

def _real_directions(n: int) -> np.ndarray:
    """Unit complex directions for the real coordinates (x_1, y_1, ..., x_n, y_n)."""
    dirs = np.zeros((2 * n, n), dtype=complex)
    for i in range(n):
        dirs[2 * i, i] = 1.0
        dirs[2 * i + 1, i] = 1j
    return dirs


def _stencil(n: int, h: float):
    """Offsets for second-order central second derivatives in 2n real variables."""
    dirs = _real_directions(n) * h
    offsets = [np.zeros(n, complex)]
    for a in range(2 * n):
        offsets += [dirs[a], -dirs[a]]
    pairs = list(combinations(range(2 * n), 2))
    for a, b in pairs:
        offsets += [dirs[a] + dirs[b], dirs[a] - dirs[b], -dirs[a] + dirs[b], -dirs[a] - dirs[b]]
    return np.array(offsets), pairs


def complex_hessian_fd(f: Callable, points, h: float = 1e-3,
                       contains: Optional[Callable] = None) -> np.ndarray:
    """Complex Hessian ``d_i dbar_j f`` by central differences in real coordinates.

    Parameters
    ----------
    f : callable
        Maps points ``(M, n)`` to values of shape ``(M, ...)``; values may be
        complex, the Hessian is taken componentwise.
    points : array_like
        Shape ``(N, n)`` or ``(n,)``.
    h : float
        Real step size. Truncation error is O(h^2).
    contains : callable, optional
        Domain test; any stencil point outside raises :class:`StencilOutOfDomain`.

    Returns
    -------
    ndarray
        Shape ``(N, ..., n, n)`` (leading axis dropped for a single point).
    """
    pts, single = as_points(points)
    N, n = pts.shape
    offsets, pairs = _stencil(n, h)
    S = len(offsets)
    q = (pts[None, :, :] + offsets[:, None, :]).reshape(S * N, n)
    if contains is not None:
        inside = np.asarray(contains(q), bool)
        if not inside.all():
            bad = q[~inside][0]
            raise StencilOutOfDomain(f"stencil point {bad} leaves the chart (h={h})")
    vals = np.asarray(f(q))
    vals = vals.reshape((S, N) + vals.shape[1:])
    f0 = vals[0]
    R = np.empty((2 * n, 2 * n) + f0.shape, dtype=np.result_type(vals, float))
    for a in range(2 * n):
        R[a, a] = (vals[1 + 2 * a] - 2.0 * f0 + vals[2 + 2 * a]) / h**2
    base = 1 + 4 * n
    for k, (a, b) in enumerate(pairs):
        pp, pm, mp, mm = vals[base + 4 * k: base + 4 * k + 4]
        R[a, b] = R[b, a] = (pp - pm - mp + mm) / (4.0 * h**2)
    H = np.empty((n, n) + f0.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            H[i, j] = 0.25 * ((R[xi, xj] + R[yi, yj]) + 1j * (R[xi, yj] - R[yi, xj]))
    H = np.moveaxis(H, (0, 1), (-2, -1))
    return H[0] if single else H


def log_det_field(field: MetricField, t=None) -> Callable:
    """Return ``points -> log det g(points, t)``, checking positivity."""
    def u(q):
        d = det_g(field.matrix(q, t))
        if np.any(~(d > 0)):
            raise NonPositiveDeterminant(f"det g <= 0 (min {np.nanmin(d):.3e}) at a stencil point")
        return np.log(d)
    return u


def chern_ricci_fd(field: MetricField, points, t=None, h: float = 1e-3) -> HermitianForm:
    """Chern-Ricci form ``-sqrt(-1) d dbar log det g`` by central differences.

    Returns a :class:`HermitianForm`, batched over points; the output is
    symmetrised so it is Hermitian to rounding.
    """
    pts, single = as_points(points)
    ric = -complex_hessian_fd(log_det_field(field, t), pts, h, field.contains)
    ric = 0.5 * (ric + np.conj(np.swapaxes(ric, -1, -2)))
    form = HermitianForm(ric, check=False)
    return form[0] if single else form


def gauduchon_defect_fd(field: MetricField, points, t=None, h: float = 1e-3):
    """Largest coefficient of ``d dbar omega`` by central differences.

    The (2,2)-form ``sqrt(-1) d dbar omega`` has, for index pairs ``k < i`` and
    ``l < j``, the coefficient
    ``T[k,l,i,j] - T[i,l,k,j] - T[k,j,i,l] + T[i,j,k,l]`` with
    ``T[k,l,i,j] = d_k dbar_l g_{i jbar}``. Zero for Gauduchon metrics.
    """
    pts, single = as_points(points)
    n = pts.shape[1]
    # hessian of each entry: shape (N, i, j, k, l)
    T = complex_hessian_fd(lambda q: field.matrix(q, t), pts, h, field.contains)
    if n < 2:
        out = np.zeros(len(pts))
        return float(out[0]) if single else out
    T = np.transpose(T, (0, 3, 4, 1, 2))  # -> (N, k, l, i, j)
    coeffs = []
    for k, i in combinations(range(n), 2):
        for l, j in combinations(range(n), 2):
            coeffs.append(T[:, k, l, i, j] - T[:, i, l, k, j] - T[:, k, j, i, l] + T[:, i, j, k, l])
    out = np.max(np.abs(np.array(coeffs)), axis=0)
    return float(out[0]) if single else out


def pullback(matrix_at_image: np.ndarray, jacobian: np.ndarray) -> np.ndarray:
    """``J^T G(gamma p) conj(J)`` with ``J[k, i] = d gamma_k / d z_i``."""
    return np.einsum("...ki,...kl,...lj->...ij", jacobian, matrix_at_image, np.conj(jacobian))
