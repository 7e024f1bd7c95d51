"""Inoue surfaces: quotients of H x C by solvable groups of affine maps.

Three families are covered:

* :class:`InoueSM` -- generated by ``(z, w) -> (alpha z, beta w)`` and three
  translations built from the eigenvectors of an integer 3x3 matrix.
* :class:`InoueSPlus` -- a Heisenberg-type fibre group with shear
  ``w -> w + b_j z + c_j`` and a central translation.
* :class:`InoueSMinus` -- as above with ``w -> -w`` in the contraction.
"""
from __future__ import annotations

import itertools

import numpy as np

from ..errors import InvalidModelParameters
from ..hermitian import as_points
from .base import AnsatzState, Generator, SampleSet, SurfaceModel, check_budget


def _layers(alpha: float, L: int, F: int):
    """Stratified heights, shape ``(L, F)``, and the layer spacing in ``log y``.

    Point ``j`` of layer ``i`` sits at ``alpha^((i + u_j)/L)`` with ``u_j`` a
    golden-ratio sequence starting at ``1/2``, so the first point of each
    layer is at the cell centre and the layers interleave in height.
    """
    u = np.mod(0.5 + np.arange(F) * (np.sqrt(5) - 1) / 2, 1.0)
    logs = (np.arange(L)[:, None] + u[None, :]) / L * np.log(alpha)
    return np.exp(logs), np.log(alpha) / L


def _grid(K: int, dim: int) -> np.ndarray:
    axes = [np.arange(K) / K] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


class InoueSM(SurfaceModel):
    """Inoue surface ``S_M`` with the Tricerri metric.

    Parameters
    ----------
    M : array_like
        Integer 3x3 matrix with determinant 1, one real eigenvalue ``alpha > 1``
        and a pair of non-real eigenvalues.
    """

    family = "inoue-sm"
    limit_kind = "normalized"
    ansatz_names = ("a", "b")

    def __init__(self, M=((0, 1, 0), (0, 0, 1), (1, 0, 1))):
        M = np.asarray(M)
        if M.shape != (3, 3) or not np.array_equal(M, np.round(M)):
            raise InvalidModelParameters("M must be an integer 3x3 matrix")
        M = M.astype(int)
        if round(np.linalg.det(M)) != 1:
            raise InvalidModelParameters("M must have determinant 1")
        vals, vecs = np.linalg.eig(M.astype(float))
        real = np.abs(vals.imag) < 1e-10
        if real.sum() != 1:
            raise InvalidModelParameters("M needs exactly one real eigenvalue")
        k = int(np.argmax(real))
        alpha = float(vals[k].real)
        if alpha <= 1:
            raise InvalidModelParameters(f"real eigenvalue {alpha} must exceed 1")
        kb = int(np.argmax(np.where(real, -np.inf, vals.imag)))
        beta = complex(vals[kb])
        a = vecs[:, k].real
        a = a / np.linalg.norm(a) * np.sign(a[np.argmax(np.abs(a))])
        b = vecs[:, kb]
        b = b / np.linalg.norm(b)
        b = b * np.exp(-1j * np.angle(b[0]))
        super().__init__(M=M)
        self.M, self.alpha, self.beta, self.a, self.b = M, alpha, beta, a, b
        self.lattice = np.stack([a, b.real, b.imag], axis=1)  # rows: (a_j, Re b_j, Im b_j)
        if abs(np.linalg.det(self.lattice)) < 1e-10:
            raise InvalidModelParameters("translation vectors are degenerate")

    def contains(self, points):
        pts, _ = as_points(points)
        return pts[:, 0].imag > 0

    def metric(self, points, t):
        z, _ = as_points(points)
        y = z[:, 0].imag
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = (1 + t / 4) / y**2
        g[:, 1, 1] = y
        return g

    def ricci(self, points):
        z, _ = as_points(points)
        y = z[:, 0].imag
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = -1 / (4 * y**2)
        return g

    def max_existence_time(self):
        return np.inf

    def limit_matrix(self, points):
        z, _ = as_points(points)
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = 1 / (4 * z[:, 0].imag ** 2)
        return g

    def limit_degenerate(self):
        return "dw"

    def generators(self):
        al, be = self.alpha, self.beta
        gens = [Generator("f0", lambda p: as_points(p)[0] * np.array([al, be]),
                          _const_jac(np.diag([al, be])),
                          lambda p: as_points(p)[0] / np.array([al, be]))]
        for j in range(3):
            shift = np.array([self.a[j], self.b[j]])
            gens.append(Generator(f"f{j + 1}", _adder(shift), _const_jac(np.eye(2)), _adder(-shift)))
        return gens

    def ghost_maps(self):
        al, be = self.alpha, self.beta
        maps = []
        for e in (0, 1, -1):
            for n in itertools.product((0, 1, -1), repeat=3):
                shift = np.array([np.dot(n, self.a), np.dot(n, self.b)])
                scale = np.array([al, be]) ** e
                maps.append(lambda p, s=scale, d=shift: p * s + d)
        return maps

    def circle_coordinate(self, points):
        z, _ = as_points(points)
        return np.mod(np.log(z[:, 0].imag) / np.log(self.alpha), 1.0)

    def circle_circumference(self):
        return np.log(self.alpha) / np.sqrt(2.0)

    def ansatz_initial(self):
        return AnsatzState(np.array([1.0, 1.0]), 0.0, self.ansatz_names)

    def ansatz_velocity(self, state):
        return np.array([0.25, 0.0])

    def ansatz_positive(self, coefficients):
        a, b = coefficients
        return a > 0 and b > 0

    def ansatz_metric(self, coefficients, points):
        a, b = coefficients
        z, _ = as_points(points)
        y = z[:, 0].imag
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = a / y**2
        g[:, 1, 1] = b * y
        return g

    def sample(self, density=(8, 12), seed=0):
        """Height layers in ``[1, alpha)`` times a ``K^3`` grid on the fibre torus."""
        L, K = int(density[0]), int(density[1])
        check_budget(L * K**3)
        s = _grid(K, 3)
        ys, dlog = _layers(self.alpha, L, len(s))
        x = s @ self.a
        w = s @ self.b
        pts = np.concatenate([np.stack([x + 1j * y, w], axis=1) for y in ys])
        layer = np.repeat(np.arange(L), len(s))
        covol = abs(np.linalg.det(self.lattice))
        weights = ys.ravel() * dlog * covol / len(s)
        return SampleSet(pts, weights, layer, np.arange(L) * len(s), self.circle_coordinate(pts),
                         meta={"layers": L, "fibre": K})

    def derived(self):
        return {"alpha": self.alpha, "beta": _cjson(self.beta), "a": self.a.tolist(),
                "b": [_cjson(v) for v in self.b]}


class _ShearInoue(SurfaceModel):
    """Common code for the two shear families (metric, ansatz, fibre group)."""

    limit_kind = "normalized"
    ansatz_names = ("c",)
    sign = 1

    def _setup(self, N, p, q, r, eig_other):
        N = np.asarray(N)
        if N.shape != (2, 2) or not np.array_equal(N, np.round(N)):
            raise InvalidModelParameters("N must be an integer 2x2 matrix")
        N = N.astype(int)
        if round(np.linalg.det(N)) != self.sign:
            raise InvalidModelParameters(f"N must have determinant {self.sign}")
        if int(r) == 0:
            raise InvalidModelParameters("r must be non-zero")
        vals, vecs = np.linalg.eig(N.astype(float))
        if np.any(np.abs(vals.imag) > 1e-12):
            raise InvalidModelParameters("N must have real eigenvalues")
        vals = vals.real
        k = int(np.argmax(vals))
        alpha = vals[k]
        if alpha <= 1 or abs(vals[1 - k] - eig_other(alpha)) > 1e-9:
            raise InvalidModelParameters(f"eigenvalues {vals} do not have the required form")
        a = vecs[:, k] / np.linalg.norm(vecs[:, k])
        b = vecs[:, 1 - k] / np.linalg.norm(vecs[:, 1 - k])
        a *= np.sign(a[0])
        b *= np.sign(b[0])
        self.N, self.p, self.q, self.r = N, int(p), int(q), int(r)
        self.alpha, self.a, self.b = float(alpha), a, b
        self.kappa = (b[0] * a[1] - b[1] * a[0]) / self.r
        e = self._e_vector(N, a, b)
        rhs = e + self.kappa * np.array([p, q])
        # row vector c with  sign * c = c N^T + rhs
        self.c = np.linalg.solve((self.sign * np.eye(2) - N.T).T, rhs)

    @staticmethod
    def _e_vector(N, a, b):
        n = N
        return np.array([0.5 * n[i, 0] * (n[i, 0] - 1) * a[0] * b[0]
                         + 0.5 * n[i, 1] * (n[i, 1] - 1) * a[1] * b[1]
                         + n[i, 0] * n[i, 1] * b[0] * a[1] for i in range(2)])

    @property
    def m(self):
        return 0.0

    def contains(self, points):
        pts, _ = as_points(points)
        return pts[:, 0].imag > 0

    def _V(self, z):
        y = z[:, 0].imag
        return z[:, 1].imag - self.m * np.log(y), y

    def metric(self, points, t):
        z, _ = as_points(points)
        V, y = self._V(z)
        return self._assemble(1 + t / 2, V, y)

    @staticmethod
    def _assemble(c, V, y):
        g = np.empty((len(V), 2, 2), complex)
        g[:, 0, 0] = (c + V**2) / y**2
        g[:, 0, 1] = g[:, 1, 0] = -V / y
        g[:, 1, 1] = 1.0
        return g

    def ricci(self, points):
        z, _ = as_points(points)
        y = z[:, 0].imag
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = -1 / (2 * y**2)
        return g

    def max_existence_time(self):
        return np.inf

    def limit_matrix(self, points):
        z, _ = as_points(points)
        g = np.zeros((len(z), 2, 2), complex)
        g[:, 0, 0] = 1 / (2 * z[:, 0].imag ** 2)
        return g

    def limit_degenerate(self):
        return "dw"

    def ansatz_initial(self):
        return AnsatzState(np.array([1.0]), 0.0, self.ansatz_names)

    def ansatz_velocity(self, state):
        return np.array([0.5])

    def ansatz_positive(self, coefficients):
        return coefficients[0] > 0

    def ansatz_metric(self, coefficients, points):
        z, _ = as_points(points)
        V, y = self._V(z)
        return self._assemble(coefficients[0], V, y)

    # -- group ------------------------------------------------------------
    def _f0(self, e: int):
        raise NotImplementedError

    def _fj_power(self, j: int, k: int):
        a, b, c = self.a[j], self.b[j], self.c[j]
        const = k * c + b * a * k * (k - 1) / 2

        def f(p):
            out = np.array(p, dtype=complex, copy=True)
            out[:, 1] = p[:, 1] + k * b * p[:, 0] + const
            out[:, 0] = p[:, 0] + k * a
            return out
        return f

    def _f3_power(self, k: int):
        return _adder(np.array([0.0, k * self.kappa]))

    def generators(self):
        gens = [self._f0_generator()]
        for j in range(2):
            J = np.array([[1.0, 0.0], [self.b[j], 1.0]])
            gens.append(Generator(f"f{j + 1}", self._fj_power(j, 1), _const_jac(J), self._fj_power(j, -1)))
        gens.append(Generator("f3", self._f3_power(1), _const_jac(np.eye(2)), self._f3_power(-1)))
        return gens

    def ghost_maps(self):
        maps = []
        for e in (0, 1, -1):
            f0 = self._f0(e)
            for n1, n2 in itertools.product((0, 1, -1), repeat=2):
                f1, f2 = self._fj_power(0, n1), self._fj_power(1, n2)
                for m in (0, 1, -1, 2, -2):
                    f3 = self._f3_power(m)
                    maps.append(lambda p, f0=f0, f1=f1, f2=f2, f3=f3: f3(f1(f2(f0(p)))))
        return maps

    def reduce_fibre(self, points):
        """Move points into the fibre fundamental domain ``(s1, s2, s3) in [0, 1)^3``."""
        p = as_points(points)[0].copy()
        y = p[:, 0].imag
        B = np.array([[self.a[0], self.a[1]], [self.b[0], self.b[1]]])
        s = np.linalg.solve(B, np.stack([p[:, 0].real, p[:, 1].imag / y]))
        shifts = np.floor(s + 1e-12).astype(int)
        for idx in np.unique(shifts.T, axis=0):
            sel = np.all(shifts.T == idx, axis=1)
            q = self._fj_power(1, -idx[1])(p[sel])
            p[sel] = self._fj_power(0, -idx[0])(q)
        k = np.floor(p[:, 1].real / self.kappa + 1e-12)
        p[:, 1] -= k * self.kappa
        return p

    def circle_coordinate(self, points):
        z, _ = as_points(points)
        return np.mod(np.log(z[:, 0].imag) / np.log(self.alpha), 1.0)

    def circle_circumference(self):
        return np.log(self.alpha)

    def _fibre_points(self, ys, K):
        """Fibre grid over each row of heights ``ys`` (shape ``(L, K^3)``)."""
        s = _grid(K, 3)
        x = s[:, :2] @ self.a
        pts = []
        for y in ys:
            v = y * (s[:, :2] @ self.b)
            u = s[:, 2] * self.kappa
            pts.append(np.stack([x + 1j * y, u + 1j * v], axis=1))
        return np.concatenate(pts), len(s)

    def _fibre_volume(self, y):
        return y * abs(self.a[0] * self.b[1] - self.a[1] * self.b[0]) * abs(self.kappa)

    def sample(self, density=(8, 12), seed=0):
        """Height layers in ``[1, alpha)`` times a ``K^3`` grid in fibre coordinates."""
        L, K = int(density[0]), int(density[1])
        check_budget(L * K**3)
        ys, dlog = _layers(self.alpha, L, K**3)
        pts, F = self._fibre_points(ys, K)
        layer = np.repeat(np.arange(L), F)
        weights = (self._fibre_volume(ys) * ys).ravel() * dlog / F
        return SampleSet(pts, weights, layer, np.arange(L) * F, self.circle_coordinate(pts),
                         meta={"layers": L, "fibre": K})

    def derived(self):
        return {"alpha": self.alpha, "a": self.a.tolist(), "b": self.b.tolist(),
                "c": self.c.tolist(), "kappa": self.kappa}


class InoueSPlus(_ShearInoue):
    """Inoue surface ``S^+`` with parameters ``(N, p, q, r, t)``.

    Parameters
    ----------
    N : array_like
        Integer 2x2 matrix, determinant 1, eigenvalues ``alpha > 1`` and ``1/alpha``.
    p, q, r : int
        Integers entering the central extension; ``r != 0``.
    shift : complex
        Translation of ``w`` in the contraction ``(z, w) -> (alpha z, w + shift)``.
    """

    family = "inoue-splus"
    sign = 1

    def __init__(self, N=((2, 1), (1, 1)), p=0, q=0, r=1, shift=0.0):
        self._setup(N, p, q, r, lambda al: 1.0 / al)
        self.shift = complex(shift)
        super().__init__(N=self.N, p=self.p, q=self.q, r=self.r, shift=self.shift)

    @classmethod
    def from_group(cls, alpha, a, b, c, kappa, shift=0.0, N=None, p=0, q=0, r=1):
        """Build an instance from explicit group data (used for double covers)."""
        obj = cls.__new__(cls)
        obj.N = None if N is None else np.asarray(N, int)
        obj.p, obj.q, obj.r = p, q, r
        obj.alpha = float(alpha)
        obj.a, obj.b, obj.c = (np.asarray(v, float) for v in (a, b, c))
        obj.kappa = float(kappa)
        obj.shift = complex(shift)
        SurfaceModel.__init__(obj, N=obj.N, p=p, q=q, r=r, shift=obj.shift)
        return obj

    @property
    def m(self):
        return self.shift.imag / np.log(self.alpha)

    def _f0(self, e):
        al, sh = self.alpha ** e, e * self.shift

        def f(p):
            out = np.array(p, dtype=complex, copy=True)
            out[:, 0] *= al
            out[:, 1] += sh
            return out
        return f

    def _f0_generator(self):
        return Generator("f0", self._f0(1), _const_jac(np.diag([self.alpha, 1.0])), self._f0(-1))

    def derived(self):
        d = super().derived()
        d["m"] = self.m
        return d


class InoueSMinus(_ShearInoue):
    """Inoue surface ``S^-`` with parameters ``(N, p, q, r)``; ``det N = -1``."""

    family = "inoue-sminus"
    sign = -1

    def __init__(self, N=((2, -1), (1, -1)), p=0, q=0, r=1):
        self._setup(N, p, q, r, lambda al: -1.0 / al)
        super().__init__(N=self.N, p=self.p, q=self.q, r=self.r)

    def _f0(self, e):
        al, sg = self.alpha ** e, (-1.0) ** e

        def f(p):
            out = np.array(p, dtype=complex, copy=True)
            out[:, 0] *= al
            out[:, 1] *= sg
            return out
        return f

    def _f0_generator(self):
        return Generator("f0", self._f0(1), _const_jac(np.diag([self.alpha, -1.0])), self._f0(-1))

    def involution(self, points):
        """The deck map ``(z, w) -> (alpha z, -w)`` of the double cover."""
        return self._f0(1)(as_points(points)[0])

    def double_cover(self) -> InoueSPlus:
        """The ``S^+`` surface generated by ``f0^2, f1, f2, f3``."""
        cover = InoueSPlus.from_group(self.alpha**2, self.a, self.b, self.c, self.kappa,
                                      N=self.N @ self.N, p=None, q=None, r=self.r)
        # integers p', q' for which the S^+ relation holds with N^2
        N2 = self.N @ self.N
        e2 = self._e_vector(N2, self.a, self.b)
        pq = (self.c @ (np.eye(2) - N2.T) - e2) / self.kappa
        cover.p, cover.q = pq.tolist()
        cover.params.update(p=cover.p, q=cover.q)
        return cover

    def cover_sample(self, density=(8, 12), seed=0) -> SampleSet:
        """Sample of the double cover closed under the involution.

        Layers ``0 .. L/2 - 1`` are a grid in ``y in [1, alpha)``; the other half
        are their images under the involution, reduced into the cover's
        fundamental domain. ``involution`` swaps the halves.
        """
        L, K = int(density[0]), int(density[1])
        check_budget(L * K**3)
        if L % 2:
            raise InvalidModelParameters("the cover sample needs an even number of layers")
        cover = self.double_cover()
        ys, dlog = _layers(cover.alpha, L, K**3)
        half, F = self._fibre_points(ys[: L // 2], K)
        image = cover.reduce_fibre(self.involution(half))
        pts = np.concatenate([half, image])
        H = len(half)
        layer = np.repeat(np.arange(L), F)
        weights = (self._fibre_volume(ys) * ys).ravel() * dlog / F
        perm = np.concatenate([np.arange(H, 2 * H), np.arange(H)])
        return SampleSet(pts, weights, layer, np.arange(L) * F, cover.circle_coordinate(pts),
                         involution=perm, meta={"layers": L, "fibre": K, "cover": cover})


def _adder(shift):
    shift = np.asarray(shift, complex)
    return lambda p: as_points(p)[0] + shift


def _const_jac(J):
    J = np.asarray(J, complex)
    return lambda p: np.broadcast_to(J, (len(as_points(p)[0]),) + J.shape).copy()


def _cjson(z):
    return [float(np.real(z)), float(np.imag(z))]
