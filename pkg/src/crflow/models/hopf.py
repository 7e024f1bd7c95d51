"""Hopf manifolds: (C^n minus the origin) modulo z -> (alpha_1 z_1, ..., alpha_n z_n)."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidModelParameters
from ..hermitian import as_points
from .base import AnsatzState, Generator, SampleSet, SurfaceModel, check_budget, sphere_points


def _outer_conj(z):
    # P[i, j] = conj(z_i) z_j
    return np.conj(z)[:, :, None] * z[:, None, :]


class Hopf(SurfaceModel):
    """Hopf manifold with the metric ``delta_ij / |z|^2``.

    Parameters
    ----------
    alphas : sequence of complex
        Scaling factors, all of the same modulus different from 1.
    """

    family = "hopf"
    limit_kind = "fixed-time"
    ansatz_names = ("a", "b")

    def __init__(self, alphas=(2.0, 2.0)):
        alphas = np.asarray(alphas, dtype=complex).ravel()
        if alphas.size < 2:
            raise InvalidModelParameters("need at least two scaling factors")
        mods = np.abs(alphas)
        if not np.allclose(mods, mods[0], rtol=1e-12) or abs(mods[0] - 1.0) < 1e-12:
            raise InvalidModelParameters("scaling factors must share a modulus != 1")
        super().__init__(alphas=alphas)
        self.alphas = alphas
        self.n = alphas.size
        self.modulus = float(mods[0])

    def contains(self, points):
        pts, _ = as_points(points)
        return np.linalg.norm(pts, axis=1) > 0

    def metric(self, points, t):
        z, _ = as_points(points)
        n = self.n
        r2 = np.sum(np.abs(z) ** 2, axis=1)[:, None, None]
        eye = np.eye(n)[None]
        return ((1 - n * t) * eye + n * t * _outer_conj(z) / r2) / r2

    def ricci(self, points):
        z, _ = as_points(points)
        r2 = np.sum(np.abs(z) ** 2, axis=1)[:, None, None]
        return self.n / r2 * (np.eye(self.n)[None] - _outer_conj(z) / r2)

    def max_existence_time(self):
        return 1.0 / self.n

    def limit_matrix(self, points):
        z, _ = as_points(points)
        r2 = np.sum(np.abs(z) ** 2, axis=1)[:, None, None]
        return _outer_conj(z) / r2**2

    def limit_degenerate(self):
        return "horizontal distribution orthogonal to z and iz"

    def generators(self):
        a = self.alphas

        def jac(points):
            pts, _ = as_points(points)
            return np.broadcast_to(np.diag(a), (len(pts), self.n, self.n)).copy()

        return [Generator("f0", lambda p: as_points(p)[0] * a, jac, lambda p: as_points(p)[0] / a)]

    def ghost_maps(self):
        a = self.alphas
        return [lambda p: p * a, lambda p: p / a]

    def circle_coordinate(self, points):
        z, _ = as_points(points)
        r = np.linalg.norm(z, axis=1)
        c = np.log(r) / np.log(self.modulus)
        return np.mod(c, 1.0)

    def circle_circumference(self):
        """Length of the radial circle in the limit metric."""
        return np.sqrt(2.0) * abs(np.log(self.modulus))

    # -- ansatz: omega = a * delta/r^2 + b * conj(z_i) z_j / r^4 ----------
    def ansatz_initial(self):
        return AnsatzState(np.array([1.0, 0.0]), 0.0, self.ansatz_names)

    def ansatz_velocity(self, state):
        return np.array([-float(self.n), float(self.n)])

    def ansatz_positive(self, coefficients):
        a, b = coefficients
        return a > 0 and a + b > 0

    def ansatz_metric(self, coefficients, points):
        a, b = coefficients
        z, _ = as_points(points)
        r2 = np.sum(np.abs(z) ** 2, axis=1)[:, None, None]
        return a * np.eye(self.n)[None] / r2 + b * _outer_conj(z) / r2**2

    # -- sampling ---------------------------------------------------------
    def sample(self, density=(16, 500), seed=0):
        """Radial layers times quasi-uniform sphere points.

        Layers sit at ``|z| = m^((k + 1/2)/K)`` with ``m = max(|alpha|, 1/|alpha|)``.
        """
        K, S = int(density[0]), int(density[1])
        check_budget(K * S)
        n = self.n
        big = max(self.modulus, 1.0 / self.modulus)
        u = sphere_points(S, 2 * n, seed)
        dirs = u[:, 0::2] + 1j * u[:, 1::2]
        logs = (np.arange(K) + 0.5) / K * np.log(big)
        radii = np.exp(logs)
        pts = (radii[:, None, None] * dirs[None]).reshape(K * S, n)
        layer = np.repeat(np.arange(K), S)
        sphere_area = 2 * np.pi**n / _gamma(n)
        dlog = np.log(big) / K
        weights = np.repeat(radii ** (2 * n), S) * dlog * sphere_area / S
        circle = np.mod(np.log(np.linalg.norm(pts, axis=1)) / np.log(big), 1.0)
        section = np.arange(K) * S
        # top layer glued to the image of the bottom layer
        fwd = (lambda p: p * self.alphas) if self.modulus > 1 else (lambda p: p / self.alphas)
        top = np.arange((K - 1) * S, K * S)
        bottom = np.arange(S)
        gluing = [(top, bottom, fwd)]
        return SampleSet(pts, weights, layer, section, circle, gluing,
                         meta={"layers": K, "sphere": S, "directions": dirs})

    def embed(self, points, t, normalize=False):
        """Log-polar coordinates ``(log r, z/r)``; sphere axes scaled by the collapsing factor."""
        z, _ = as_points(points)
        r = np.linalg.norm(z, axis=1)
        u = z / r[:, None]
        E = np.empty((len(z), 1 + 2 * self.n))
        E[:, 0] = np.log(r)
        E[:, 1::2] = u.real
        E[:, 2::2] = u.imag
        W = np.full_like(E, np.sqrt(2.0 * max(1 - self.n * t, 1e-6)))
        W[:, 0] = np.sqrt(2.0)
        return E, W

    def horizontal_angle(self, points, vectors):
        """Angle between tangent vectors and the horizontal distribution.

        The horizontal space at ``z`` is the complex orthogonal complement of ``z``.
        """
        z, _ = as_points(points)
        v = np.asarray(vectors, complex)
        r = np.linalg.norm(z, axis=1)
        # components along z (radial + Reeb) and orthogonal to it
        proj = np.sum(np.conj(z) * v, axis=1) / r
        vert = np.abs(proj)
        total = np.linalg.norm(v, axis=1)
        horiz = np.sqrt(np.maximum(total**2 - vert**2, 0.0))
        return np.arctan2(vert, horiz)

    def derived(self):
        return {"modulus": self.modulus, "existence_time": self.max_existence_time()}


def _gamma(n):
    from math import factorial
    return factorial(n - 1)
