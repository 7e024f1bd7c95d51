"""Complex tori C^n / Lambda with constant or potential-perturbed metrics."""
from __future__ import annotations

import itertools

import numpy as np

from ..errors import InvalidModelParameters
from ..hermitian import as_points
from .base import AnsatzState, Generator, SampleSet, SurfaceModel, check_budget


class Torus(SurfaceModel):
    """Flat torus ``C^n / Lambda``.

    Parameters
    ----------
    lattice : array_like, optional
        ``2n`` complex lattice vectors of length ``n`` (rows); defaults to the
        standard lattice generated by ``e_j`` and ``i e_j``.
    base : array_like, optional
        Constant positive Hermitian matrix of the flat metric (identity by default).
    psi_amplitude, psi_wave : float, sequence of int
        Optional Kahler potential ``psi = A cos(2 pi k . x)`` in real coordinates
        ``(x_1, y_1, ..., x_n, y_n)`` of the standard lattice; the initial metric
        is then ``base + i d dbar psi``.
    """

    family = "torus"
    limit_kind = "fixed-time"
    ansatz_names = ("c",)

    def __init__(self, n=2, lattice=None, base=None, psi_amplitude=0.0, psi_wave=None):
        n = int(n)
        if lattice is None:
            lattice = np.concatenate([np.eye(n), 1j * np.eye(n)])
        lattice = np.asarray(lattice, complex)
        if lattice.shape != (2 * n, n):
            raise InvalidModelParameters(f"lattice must have shape {(2 * n, n)}")
        real = np.concatenate([lattice.real, lattice.imag], axis=1)
        if abs(np.linalg.det(real)) < 1e-12:
            raise InvalidModelParameters("lattice vectors are degenerate")
        base = np.eye(n, dtype=complex) if base is None else np.asarray(base, complex)
        if np.any(np.linalg.eigvalsh(base) <= 0):
            raise InvalidModelParameters("base metric must be positive definite")
        wave = np.zeros(2 * n, int) if psi_wave is None else np.asarray(psi_wave, int)
        if wave.shape != (2 * n,):
            raise InvalidModelParameters("psi_wave needs one integer per real coordinate")
        if psi_amplitude and not np.allclose(lattice, np.concatenate([np.eye(n), 1j * np.eye(n)])):
            raise InvalidModelParameters("potential perturbations assume the standard lattice")
        super().__init__(n=n, lattice=lattice, base=base, psi_amplitude=float(psi_amplitude), psi_wave=wave)
        self.n = n
        self.lattice = lattice
        self.base = base
        self.psi_amplitude = float(psi_amplitude)
        self.psi_wave = wave
        self.covolume = abs(np.linalg.det(real))

    def contains(self, points):
        return np.ones(len(as_points(points)[0]), bool)

    def psi_hessian(self, points):
        """``d_i dbar_j psi`` of the cosine potential."""
        z, _ = as_points(points)
        A, k = self.psi_amplitude, self.psi_wave
        real = np.empty((len(z), 2 * self.n))
        real[:, 0::2], real[:, 1::2] = z.real, z.imag
        phase = 2 * np.pi * real @ k
        kc = k[0::2] - 1j * k[1::2]  # d_j of exp(2 pi i k.x) brings pi i (k_x - i k_y)
        # psi = A cos(phase): d_i dbar_j psi = -A cos(phase) pi^2 kc_i conj(kc_j)
        return -A * np.cos(phase)[:, None, None] * np.pi**2 * kc[None, :, None] * np.conj(kc)[None, None, :]

    def metric(self, points, t):
        if t != 0 and self.psi_amplitude:
            raise NotImplementedError("the perturbed torus flow has no closed form; use evolve_torus_ma")
        z, _ = as_points(points)
        g = np.broadcast_to(self.base, (len(z), self.n, self.n)).astype(complex)
        if self.psi_amplitude:
            g = g + self.psi_hessian(z)
        return g

    def ricci(self, points):
        if self.psi_amplitude:
            raise NotImplementedError("no closed form for the perturbed torus")
        return np.zeros((len(as_points(points)[0]), self.n, self.n), complex)

    def max_existence_time(self):
        return np.inf

    def limit_matrix(self, points):
        return self.metric(points, 0.0)

    def ansatz_initial(self):
        return AnsatzState(np.array([1.0]), 0.0, self.ansatz_names)

    def ansatz_velocity(self, state):
        return np.zeros(1)

    def ansatz_positive(self, coefficients):
        return coefficients[0] > 0

    def ansatz_metric(self, coefficients, points):
        return coefficients[0] * self.metric(points, 0.0)

    def generators(self):
        gens = []
        for j, v in enumerate(self.lattice):
            J = lambda p: np.broadcast_to(np.eye(self.n, dtype=complex), (len(as_points(p)[0]), self.n, self.n)).copy()
            gens.append(Generator(f"e{j}", lambda p, v=v: as_points(p)[0] + v, J,
                                  lambda p, v=v: as_points(p)[0] - v))
        return gens

    def ghost_maps(self):
        maps = []
        for coeffs in itertools.product((0, 1, -1), repeat=2 * self.n):
            shift = np.asarray(coeffs) @ self.lattice
            maps.append(lambda p, s=shift: p + s)
        return maps

    def reduce(self, points):
        """Lattice coordinates in ``[0, 1)`` of the given points."""
        z, _ = as_points(points)
        real = np.concatenate([self.lattice.real, self.lattice.imag], axis=1)
        x = np.concatenate([z.real, z.imag], axis=1)
        return np.mod(np.linalg.solve(real.T, x.T).T, 1.0)

    def distance(self, p, q):
        """Exact flat distance between points of the torus for the base metric.

        Minimises over the 3^(2n) nearest lattice translates, which is exact
        for reduced, not too skewed lattices.
        """
        p, _ = as_points(p)
        q, _ = as_points(q)
        best = np.full(len(p), np.inf)
        for coeffs in itertools.product((-1, 0, 1), repeat=2 * self.n):
            d = q - p + np.asarray(coeffs) @ self.lattice
            q2 = 2 * np.real(np.einsum("ni,ij,nj->n", d, self.base, np.conj(d)))
            best = np.minimum(best, np.sqrt(q2))
        return best

    def sample(self, density=12, seed=0):
        """Uniform periodic grid with ``density`` points per real direction."""
        K = int(density)
        check_budget(K ** (2 * self.n))
        s = np.stack(np.meshgrid(*([np.arange(K) / K] * (2 * self.n)), indexing="ij"), -1).reshape(-1, 2 * self.n)
        pts = s @ self.lattice
        weights = np.full(len(pts), self.covolume / len(pts))
        return SampleSet(pts, weights, np.zeros(len(pts), int), np.array([0]), None, meta={"grid": K})

    def derived(self):
        return {"covolume": self.covolume}
