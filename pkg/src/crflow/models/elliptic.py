"""Non-Kahler properly elliptic surfaces: (H x C*) modulo a Fuchsian group and w -> alpha w."""
from __future__ import annotations

import itertools

import numpy as np

from ..errors import InvalidModelParameters
from ..hermitian import as_points
from .base import AnsatzState, Generator, SampleSet, SurfaceModel, check_budget

_CAYLEY = np.array([[1j, 1j], [-1, 1]]) / np.sqrt(2j)


def disk_to_uhp(zeta):
    return 1j * (1 + zeta) / (1 - zeta)


def uhp_to_disk(z):
    return (z - 1j) / (z + 1j)


def hyperbolic_distance(z1, z2):
    """Distance in the upper half plane with curvature -1."""
    z1, z2 = np.asarray(z1), np.asarray(z2)
    arg = 1 + np.abs(z1 - z2) ** 2 / (2 * z1.imag * z2.imag)
    return np.arccosh(np.maximum(arg, 1.0))


def mobius(A, z):
    return (A[0, 0] * z + A[0, 1]) / (A[1, 0] * z + A[1, 1])


def octagon_group():
    """Side pairings of the regular hyperbolic octagon with angles pi/4.

    Returns four matrices in SL(2, R) acting on the upper half plane; their
    inverses pair the remaining sides.
    """
    d = np.arccosh(1 + np.sqrt(2))  # centre-to-side distance
    c, s = np.cosh(d), np.sinh(d)
    cinv = np.linalg.inv(_CAYLEY)
    gens = []
    for k in range(4):
        th = k * np.pi / 4
        R = np.diag([np.exp(1j * th / 2), np.exp(-1j * th / 2)])
        Ad = R @ np.array([[c, s], [s, c]]) @ np.conj(R)
        Au = _CAYLEY @ Ad @ cinv
        gens.append(np.real_if_close(Au, tol=1e6).real)
    return gens


def words(generators, max_length):
    """All reduced words of length <= max_length in the generators and inverses."""
    letters = []
    for A in generators:
        letters += [A, np.linalg.inv(A)]
    out = [np.eye(2)]
    frontier = [(np.eye(2), -1)]
    for _ in range(max_length):
        nxt = []
        for W, last in frontier:
            for i, A in enumerate(letters):
                if last >= 0 and i == (last ^ 1):
                    continue
                nxt.append((W @ A, i))
        out += [W for W, _ in nxt]
        frontier = nxt
    return out


class EllipticBundle(SurfaceModel):
    """Elliptic surface ``Gamma~ \\ (H x C*)`` with the flat-fibre metric.

    Parameters
    ----------
    generators : list of 2x2 arrays, optional
        Fuchsian group generators in SL(2, R); defaults to the genus-2 octagon group.
    alpha : complex
        Fibre multiplier, ``|alpha| != 1``.
    character : sequence of complex, optional
        Unit-modulus character values, one per generator (defaults to trivial).
    """

    family = "elliptic"
    limit_kind = "normalized"
    ansatz_names = ("c",)

    def __init__(self, generators=None, alpha=2.0, character=None):
        gens = octagon_group() if generators is None else [np.asarray(g, float) for g in generators]
        for g in gens:
            if g.shape != (2, 2) or abs(np.linalg.det(g) - 1) > 1e-9:
                raise InvalidModelParameters("Fuchsian generators must lie in SL(2, R)")
        alpha = complex(alpha)
        if abs(abs(alpha) - 1) < 1e-12:
            raise InvalidModelParameters("|alpha| must differ from 1")
        chi = np.ones(len(gens), complex) if character is None else np.asarray(character, complex)
        if chi.shape != (len(gens),) or np.any(np.abs(np.abs(chi) - 1) > 1e-12):
            raise InvalidModelParameters("character values must have modulus one")
        super().__init__(generators=[g.tolist() for g in gens], alpha=alpha, character=chi)
        self.fuchsian = gens
        self.alpha = alpha
        self.character = chi
        self._words = None

    def contains(self, points):
        pts, _ = as_points(points)
        return (pts[:, 0].imag > 0) & (np.abs(pts[:, 1]) > 0)

    def metric(self, points, t):
        p, _ = as_points(points)
        y = p[:, 0].imag
        w = p[:, 1]
        g = np.empty((len(p), 2, 2), complex)
        g[:, 0, 0] = (2 + t / 2) / y**2
        g[:, 0, 1] = -2j / (y * np.conj(w))
        g[:, 1, 0] = 2j / (y * w)
        g[:, 1, 1] = 4 / np.abs(w) ** 2
        return g

    def ricci(self, points):
        p, _ = as_points(points)
        g = np.zeros((len(p), 2, 2), complex)
        g[:, 0, 0] = -1 / (2 * p[:, 0].imag ** 2)
        return g

    def max_existence_time(self):
        return np.inf

    def limit_matrix(self, points):
        p, _ = as_points(points)
        g = np.zeros((len(p), 2, 2), complex)
        g[:, 0, 0] = 1 / (2 * p[:, 0].imag ** 2)
        return g

    def limit_degenerate(self):
        return "fibre direction dw"

    def ansatz_initial(self):
        return AnsatzState(np.array([2.0]), 0.0, self.ansatz_names)

    def ansatz_velocity(self, state):
        return np.array([0.5])

    def ansatz_positive(self, coefficients):
        # det = (c - 1) * 4 / (y^2 |w|^2)
        return coefficients[0] > 1

    def ansatz_metric(self, coefficients, points):
        g = self.metric(points, 0.0)
        p, _ = as_points(points)
        g[:, 0, 0] = coefficients[0] / p[:, 0].imag ** 2
        return g

    # -- group ------------------------------------------------------------
    def _element(self, A, k: int, chi: complex):
        a, b, c, d = A.ravel()
        mult = self.alpha**k * chi

        def f(p):
            p = as_points(p)[0]
            z, w = p[:, 0], p[:, 1]
            cz = c * z + d
            return np.stack([(a * z + b) / cz, cz * w * mult], axis=1)

        def jac(p):
            p = as_points(p)[0]
            z, w = p[:, 0], p[:, 1]
            cz = c * z + d
            J = np.zeros((len(p), 2, 2), complex)
            J[:, 0, 0] = 1 / cz**2
            J[:, 1, 0] = c * w * mult
            J[:, 1, 1] = cz * mult
            return J
        return f, jac

    def generators(self):
        gens = []
        for i, (A, chi) in enumerate(zip(self.fuchsian, self.character)):
            f, jac = self._element(A, 0, chi)
            finv, _ = self._element(np.linalg.inv(A), 0, 1 / chi)
            gens.append(Generator(f"g{i}", f, jac, finv))
        f, jac = self._element(np.eye(2), 1, 1.0)
        finv, _ = self._element(np.eye(2), -1, 1.0)
        gens.append(Generator("alpha", f, jac, finv))
        return gens

    def group_words(self, max_length=3):
        """Matrices of reduced words of length <= max_length (cached)."""
        if self._words is None or self._words[0] != max_length:
            self._words = (max_length, words(self.fuchsian, max_length))
        return self._words[1]

    def _word_characters(self, max_length):
        letters = []
        for A, chi in zip(self.fuchsian, self.character):
            letters += [(A, chi), (np.linalg.inv(A), 1 / chi)]
        out = [(np.eye(2), 1.0 + 0j)]
        frontier = [(np.eye(2), 1.0 + 0j, -1)]
        for _ in range(max_length):
            nxt = []
            for W, ch, last in frontier:
                for i, (A, c) in enumerate(letters):
                    if last >= 0 and i == (last ^ 1):
                        continue
                    nxt.append((W @ A, ch * c, i))
            out += [(W, ch) for W, ch, _ in nxt]
            frontier = nxt
        return out

    def near_elements(self, radius, max_length=4):
        """Distinct group elements ``(A, chi)`` with ``d(i, A i) <= radius``.

        Searched among reduced words of length ``<= max_length``.
        """
        key = (round(float(radius), 9), max_length)
        cache = self.__dict__.setdefault("_near_cache", {})
        if key not in cache:
            out, seen = [], set()
            for A, chi in self._word_characters(max_length):
                if hyperbolic_distance(1j, mobius(A, 1j)) > radius + 1e-9:
                    continue
                tag = tuple(np.round(np.concatenate([A.ravel(), [chi.real, chi.imag]]), 8))
                if tag not in seen:
                    seen.add(tag)
                    out.append((A, chi))
            cache[key] = out
        return cache[key]

    @property
    def polygon_radius(self):
        """Largest distance from ``i`` to a point of the fundamental polygon (grid estimate)."""
        if "_radius" not in self.__dict__:
            self._radius = float(np.max(hyperbolic_distance(self.base_points(0.05), 1j))) + 0.05
        return self._radius

    def ghost_maps(self, margin=0.5):
        """Elements whose polygon copies touch the ``margin``-neighbourhood of the polygon."""
        maps = []
        for A, chi in self.near_elements(2 * self.polygon_radius + margin):
            for k in (0, 1, -1):
                maps.append(self._element(A, k, chi)[0])
        return maps

    def in_polygon(self, z):
        """Membership in the Dirichlet domain centred at ``i``."""
        z = np.asarray(z, complex)
        d0 = hyperbolic_distance(z, 1j)
        inside = np.ones(z.shape, bool)
        for A in self.fuchsian:
            for B in (A, np.linalg.inv(A)):
                inside &= d0 <= hyperbolic_distance(z, mobius(B, 1j)) + 1e-12
        return inside

    def base_distance(self, z1, z2, max_length=4):
        """Quotient hyperbolic distance, minimised over words of bounded length.

        ``z1`` and ``z2`` broadcast against each other. A first pass over the
        elements near the identity bounds the answer by ``D``; words moving
        ``i`` by more than ``d(i, z1) + D + d(i, z2)`` cannot do better and
        are skipped.
        """
        z1, z2 = np.broadcast_arrays(np.asarray(z1, complex), np.asarray(z2, complex))
        r1 = float(np.max(hyperbolic_distance(z1, 1j)))
        r2 = float(np.max(hyperbolic_distance(z2, 1j)))
        best = hyperbolic_distance(z1, z2)
        for A, _ in self.near_elements(r1 + r2, max_length):
            best = np.minimum(best, hyperbolic_distance(z1, mobius(A, z2)))
        reach = r1 + r2 + float(np.max(best))
        for A in self._moebius_words(max_length):
            d = hyperbolic_distance(1j, mobius(A, 1j))
            if r1 + r2 < d <= reach:
                best = np.minimum(best, hyperbolic_distance(z1, mobius(A, z2)))
        return best

    def _moebius_words(self, max_length):
        """Distinct Moebius maps among reduced words (``A`` and ``-A`` identified)."""
        cache = self.__dict__.setdefault("_moebius_cache", {})
        if max_length not in cache:
            out, seen = [], set()
            for A in self.group_words(max_length):
                B = A if (A[1, 0], A[1, 1]) >= (0, 0) else -A
                tag = tuple(np.round(B.ravel(), 8))
                if tag not in seen:
                    seen.add(tag)
                    out.append(B)
            cache[max_length] = out
        return cache[max_length]

    def chart_representative(self, points, max_length=4):
        """Group-equivalent points with ``|log Im z|`` smallest and ``|w|`` closest to 1.

        The Fuchsian part fixes the height; a power of ``w -> alpha w`` then
        brings ``log |w|`` into ``[-log|alpha|/2, log|alpha|/2]``.
        """
        p = as_points(points)[0].copy()
        best = np.abs(np.log(p[:, 0].imag))
        out = p.copy()
        for A, chi in self.near_elements(np.inf, max_length):
            q = self._element(A, 0, chi)[0](p)
            score = np.abs(np.log(q[:, 0].imag))
            better = score < best - 1e-12
            out[better] = q[better]
            best = np.minimum(best, score)
        la = np.log(abs(self.alpha))
        k = np.round(np.log(np.abs(out[:, 1])) / la)
        out[:, 1] = out[:, 1] * self.alpha ** (-k)
        return out

    def circle_coordinate(self, points):
        raise NotImplementedError("the elliptic base is a hyperbolic surface, not a circle")

    def base_points(self, spacing=0.15, seed=0):
        """Quasi-uniform points of the octagon, on hyperbolic polar rings about ``i``."""
        rng = np.random.default_rng(seed)
        R = 3.0
        zs = [0j]
        for k in range(1, int(R / spacing) + 1):
            rho = k * spacing
            count = max(1, int(round(2 * np.pi * np.sinh(rho) / spacing)))
            phase = rng.uniform(0, 2 * np.pi)
            th = phase + 2 * np.pi * np.arange(count) / count
            zs.append(np.tanh(rho / 2) * np.exp(1j * th))
        zeta = np.concatenate([np.atleast_1d(v) for v in zs])
        z = disk_to_uhp(zeta)
        return z[self.in_polygon(z)]

    def sample(self, density=(0.15, 2, 8), seed=0):
        """Octagon points times an ``n_l x n_theta`` grid on the fibre annulus.

        ``density = (spacing, n_l, n_theta)``; the fibre grid contains ``w = 1``.
        """
        spacing, nl, nth = float(density[0]), int(density[1]), int(density[2])
        # the genus-2 base has hyperbolic area 4 pi
        check_budget(4 * np.pi / spacing**2 * nl * nth)
        z = self.base_points(spacing, seed)
        ell = np.arange(nl) / nl * np.log(abs(self.alpha))
        th = np.arange(nth) / nth * 2 * np.pi
        W = (np.exp(ell)[:, None] * np.exp(1j * th)[None, :]).ravel()
        pts = np.stack([np.repeat(z, len(W)), np.tile(W, len(z))], axis=1)
        layer = np.repeat(np.arange(len(z)), len(W))
        # hyperbolic area 4 pi (genus 2) shared equally, converted to chart measure
        area = 4 * np.pi / len(z) * z.imag**2
        fibre = np.pi * (abs(self.alpha) ** 2 - 1) / len(W) * np.abs(W) ** 2 / np.mean(np.abs(W) ** 2)
        weights = np.repeat(area, len(W)) * np.tile(fibre, len(z))
        section = np.arange(len(z)) * len(W)
        return SampleSet(pts, weights, layer, section, None,
                         meta={"base": z, "fibre": W, "spacing": spacing},
                         sheet=np.tile(np.arange(len(W)), len(z)))

    def derived(self):
        return {"genus": 2 if len(self.fuchsian) == 4 else None}
