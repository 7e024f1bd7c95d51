"""Sampled metric spaces, reference limits and Gromov-Hausdorff upper bounds.

The geodesic distance of ``omega(t)`` (or ``omega(t)/t``) on a compact
quotient is approximated by shortest paths in a neighbourhood graph built
on a fundamental-domain sample. Neighbours across the domain boundary are
found through "ghost" copies of the sample moved by group elements close to
the identity. Edge weights are the Riemannian lengths of straight chart
segments, by three-point Simpson quadrature.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .errors import DisconnectedGraph, FamilyMismatch, NotAnIsometry
from .models.base import SampleSet, SurfaceModel, sphere_points
from .models.elliptic import EllipticBundle
from .models.hopf import Hopf
from .models.inoue import InoueSM, InoueSMinus, InoueSPlus


@dataclass
class SampledMetricSpace:
    """Finite metric space extracted from a sample.

    Attributes
    ----------
    points : ndarray
        Indices into the sample of the retained points.
    coords : ndarray
        Chart coordinates of the retained points.
    dist : ndarray
        Symmetric ``(m, m)`` distance matrix.
    provenance : dict
        Model, time and sampling parameters.
    """

    points: np.ndarray
    coords: np.ndarray
    dist: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def diameter(self) -> float:
        return float(np.max(self.dist))

    def local_index(self, sample_indices) -> np.ndarray:
        """Positions of the given sample indices in ``points``."""
        lookup = {int(p): k for k, p in enumerate(self.points)}
        return np.array([lookup[int(i)] for i in np.atleast_1d(sample_indices)])


# ---------------------------------------------------------------------------
# graph construction

def segment_lengths(model: SurfaceModel, t: float, p: np.ndarray, q: np.ndarray, scale: float = 1.0,
                    chunk: int = 200_000) -> np.ndarray:
    """Riemannian length of the chart segments ``p -> q`` (Simpson's rule).

    Segments whose midpoint leaves the chart get infinite length.
    """
    out = np.empty(len(p))
    for s in range(0, len(p), chunk):
        a, b = p[s:s + chunk], q[s:s + chunk]
        v = b - a
        inside = model.contains(a + 0.5 * v)
        vals = []
        for tau in (0.0, 0.5, 1.0):
            x = a + tau * v
            x[~inside] = a[~inside]
            g = model.metric(x, t)
            q2 = 2 * np.real(np.einsum("ni,nij,nj->n", v, g, np.conj(v))) * scale
            vals.append(np.sqrt(np.maximum(q2, 0.0)))
        out[s:s + chunk] = np.where(inside, (vals[0] + 4 * vals[1] + vals[2]) / 6, np.inf)
    return out


def _ghosts(model: SurfaceModel, points: np.ndarray, E: np.ndarray, W: np.ndarray, t: float,
            normalize: bool, kc: int, ghost_maps=None):
    """Ghost copies near the fundamental domain, with their base indices."""
    maps = model.ghost_maps() if ghost_maps is None else ghost_maps
    Wref = np.median(W, axis=0)
    base_tree = cKDTree(E * Wref)
    d, _ = base_tree.query(E * Wref, k=list(range(1, min(kc + 1, len(E)) + 1)))
    spread = float(np.max(W / Wref)) / float(np.min(W / Wref))
    margin = 2.0 * float(np.quantile(d[:, -1], 0.99)) * spread
    allp, allE, idx = [points], [E], [np.arange(len(points))]
    for f in maps[1:]:
        gp = f(points)
        gE, _ = model.embed(gp, t, normalize)
        dd, _ = base_tree.query(gE * Wref, k=1, distance_upper_bound=margin)
        keep = np.isfinite(dd)
        allp.append(gp[keep])
        allE.append(gE[keep])
        idx.append(np.nonzero(keep)[0])
    return np.concatenate(allp), np.concatenate(allE), np.concatenate(idx)


def neighbour_graph(model: SurfaceModel, t: float, sample: SampleSet, k: int = 16,
                    candidates: Optional[int] = None, normalize: Optional[bool] = None,
                    symmetries=(), edge_filter=None, ghost_maps=None, bin_width: float = 0.2,
                    sheet_neighbours: Optional[int] = None, detour: float = 0.01,
                    min_angle: float = 7.5):
    """Sparse symmetric graph of Riemannian edge lengths on the sample.

    Parameters
    ----------
    k : int
        Edges kept per point, chosen by true length among ``candidates``
        nearest points of the locally rescaled embedding.
    normalize : bool, optional
        Use ``omega(t)/t``; defaults to the model's limit kind.
    symmetries : sequence of ndarray
        Sample permutations under which the edge set is closed.
    edge_filter : callable, optional
        ``edge_filter(p, q) -> mask`` restricting admissible edges.
    sheet_neighbours : int, optional
        Extra edges per point to its nearest points of the same sheet
        (default ``3 k`` when the sample has sheets).
    detour : float
        A candidate is dropped when the path through a shorter kept edge of
        the same point is at most ``1 + detour`` times longer; the freed slot
        goes to another direction. This keeps strongly anisotropic samples
        connected and cuts the zig-zag stretch of graph paths.
    min_angle : float
        Candidates within this many degrees of a shorter kept edge are also
        treated as redundant.

    Returns
    -------
    scipy.sparse.csr_matrix
    """
    if normalize is None:
        normalize = model.limit_kind == "normalized" and t > 0
    scale = 1.0 / t if normalize else 1.0
    kc = candidates or 3 * k
    pts = sample.points
    N = len(pts)
    E, W = model.embed(pts, t, normalize)
    allp, allE, base_idx = _ghosts(model, pts, E, W, t, normalize, kc, ghost_maps)
    keys = np.round(np.log(W) / bin_width).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    rows, cols, lens = [], [], []
    for g in range(len(uniq)):
        members = np.nonzero(inverse == g)[0]
        w = np.exp(uniq[g] * bin_width)
        tree = cKDTree(allE * w)
        kk = min(kc + 1, len(allE))
        _, nb = tree.query(E[members] * w, k=list(range(1, kk + 1)))
        i = np.repeat(members, kk)
        j = nb.ravel()
        ok = ~((j < N) & (j == i))
        i, j = i[ok], j[ok]
        if edge_filter is not None:
            keep = edge_filter(pts[i], allp[j])
            i, j = i[keep], j[keep]
        L = segment_lengths(model, t, pts[i], allp[j], scale)
        rows.append(i)
        cols.append(j)
        lens.append(L)
    i = np.concatenate(rows)
    jloc = np.concatenate(cols)
    L = np.concatenate(lens)
    ok = np.isfinite(L) & (base_idx[jloc] != i)
    i, jloc, L = i[ok], jloc[ok], L[ok]
    order = np.lexsort((L, i))
    i, jloc, L = i[order], jloc[order], L[order]
    sel = _spread_edges(i, (allE[jloc] - E[i]) * W[i], k, N, detour, min_angle)
    i, j, L = i[sel], base_idx[jloc[sel]], L[sel]
    if sample.sheet is not None:
        ks = 3 * k if sheet_neighbours is None else sheet_neighbours
        si, sj, sL = _sheet_edges(model, t, scale, pts, E, W, sample.sheet, allp, allE, base_idx, ks, N)
        i, j, L = np.concatenate([i, si]), np.concatenate([j, sj]), np.concatenate([L, sL])
    for glue_i, glue_j, f in sample.gluing:
        gl = segment_lengths(model, t, pts[glue_i], f(pts[glue_j]), scale)
        i, j, L = np.concatenate([i, glue_i]), np.concatenate([j, glue_j]), np.concatenate([L, gl])
    for perm in symmetries:
        i, j, L = np.concatenate([i, perm[i]]), np.concatenate([j, perm[j]]), np.concatenate([L, L])
    return _min_symmetric(i, j, L, N)


def _spread_edges(i, vec, k, N, detour, min_angle=0.0):
    """Mask choosing up to ``k`` edges per point, shortest first, skipping redundant ones.

    A candidate ``i -> j`` is redundant when some kept edge ``i -> m`` gives
    ``|im| + |mj| <= (1 + detour) |ij|`` in the locally rescaled coordinates
    ``vec``, or points within ``min_angle`` degrees of ``i -> m``. ``i`` must
    be sorted by point and then by length.
    """
    first = np.searchsorted(i, np.arange(N + 1))
    width = int(np.diff(first).max()) if N else 0
    slot = np.arange(len(i)) - first[i]
    V = np.zeros((N, width, vec.shape[1]))
    valid = np.zeros((N, width), bool)
    V[i, slot] = vec
    valid[i, slot] = True
    norm = np.linalg.norm(V, axis=2)
    U = V / np.maximum(norm, 1e-300)[..., None]
    cos_max = np.cos(np.deg2rad(min_angle))
    kept = np.zeros((N, width), bool)
    nkept = np.zeros(N, int)
    for c in range(width):
        take = valid[:, c] & (nkept < k)
        if c and detour > 0:
            via = norm[:, :c] + np.linalg.norm(V[:, c:c + 1] - V[:, :c], axis=2)
            redundant = via <= (1 + detour) * norm[:, c:c + 1]
            if min_angle > 0:
                redundant |= np.einsum("nd,nkd->nk", U[:, c], U[:, :c]) > cos_max
            take &= ~np.any(kept[:, :c] & redundant, axis=1)
        kept[:, c] = take
        nkept += take
    return kept[i, slot]


def _sheet_edges(model, t, scale, pts, E, W, sheet, allp, allE, base_idx, ks, N):
    """Nearest neighbours within each sheet, ghosts included."""
    rows, cols, lens = [], [], []
    ghost_sheet = sheet[base_idx]
    for label in np.unique(sheet):
        members = np.nonzero(sheet == label)[0]
        pool = np.nonzero(ghost_sheet == label)[0]
        w = np.median(W[members], axis=0)
        kk = min(ks + 1, len(pool))
        _, nb = cKDTree(allE[pool] * w).query(E[members] * w, k=list(range(1, kk + 1)))
        i = np.repeat(members, kk)
        j = pool[nb.ravel()]
        ok = ~((j < N) & (j == i))
        i, j = i[ok], j[ok]
        L = segment_lengths(model, t, pts[i], allp[j], scale)
        fin = np.isfinite(L)
        rows.append(i[fin])
        cols.append(base_idx[j[fin]])
        lens.append(L[fin])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(lens)


def _min_symmetric(i, j, L, N):
    a = np.concatenate([i, j])
    b = np.concatenate([j, i])
    w = np.concatenate([L, L])
    order = np.lexsort((w, b, a))
    a, b, w = a[order], b[order], w[order]
    first = np.ones(len(a), bool)
    first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    return sparse.csr_matrix((w[first], (a[first], b[first])), shape=(N, N))


def shortest_paths(graph, sources, workers: int = 1) -> np.ndarray:
    """Dijkstra distances from ``sources`` to every node."""
    sources = np.asarray(sources)
    if workers <= 1 or len(sources) < 2 * workers:
        return dijkstra(graph, directed=False, indices=sources)
    chunks = np.array_split(sources, workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda c: dijkstra(graph, directed=False, indices=c), chunks))
    return np.vstack(parts)


def select_points(sample: SampleSet, count: Optional[int], seed: int = 0) -> np.ndarray:
    """Sorted sample indices: the section plus ``count`` random points.

    The selection is closed under the sample's involution, if any.
    """
    N = len(sample)
    if count is None or count >= N:
        chosen = np.arange(N)
    else:
        rng = np.random.default_rng(seed)
        chosen = np.union1d(rng.choice(N, size=count, replace=False), sample.section)
    if sample.involution is not None:
        chosen = np.union1d(chosen, sample.involution[chosen])
    return np.sort(chosen)


def build_space(model: SurfaceModel, t: float, sample: SampleSet, k_neighbors: int = 16,
                n_select: Optional[int] = 600, normalize: Optional[bool] = None, seed: int = 0,
                workers: int = 1, candidates: Optional[int] = None, selected=None,
                symmetries=None, detour: float = 0.01, min_angle: float = 7.5) -> SampledMetricSpace:
    """Approximate the metric space ``(M, d_omega(t))`` from a sample.

    Raises
    ------
    DisconnectedGraph
        If some selected points cannot reach each other.
    """
    if normalize is None:
        normalize = model.limit_kind == "normalized" and t > 0
    if symmetries is None:
        symmetries = () if sample.involution is None else (sample.involution,)
    graph = neighbour_graph(model, t, sample, k_neighbors, candidates, normalize, symmetries,
                            detour=detour, min_angle=min_angle)
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise DisconnectedGraph(f"neighbourhood graph has {ncomp} components; increase k or density")
    sel = select_points(sample, n_select, seed) if selected is None else np.asarray(selected)
    D = shortest_paths(graph, sel, workers)[:, sel]
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    prov = {"family": model.family, "t": t, "normalized": bool(normalize), "k": k_neighbors,
            "sample_size": len(sample), "selected": len(sel), "seed": seed}
    return SampledMetricSpace(sel, sample.points[sel], D, prov)


# ---------------------------------------------------------------------------
# reference spaces

class ReferenceSpace:
    """Finite sample of a model limit space with its exact distances."""

    kind = "abstract"

    def __init__(self, points, dist, params=None):
        self.points = np.asarray(points)
        self.dist = np.asarray(dist, float)
        self.params = params or {}

    def __len__(self):
        return len(self.points)

    def diameter(self):
        return float(np.max(self.dist))


class CircleReference(ReferenceSpace):
    """Round circle of radius ``radius`` sampled at parameters in ``[0, 1)``."""

    kind = "circle"

    def __init__(self, radius: float, params):
        params = np.mod(np.asarray(params, float), 1.0)
        self.radius = float(radius)
        d = np.abs(params[:, None] - params[None, :])
        dist = 2 * np.pi * self.radius * np.minimum(d, 1 - d)
        super().__init__(params, dist, {"radius": self.radius})

    @property
    def circumference(self):
        return 2 * np.pi * self.radius

    def distance(self, a, b):
        d = np.abs(np.mod(a, 1.0) - np.mod(b, 1.0))
        return 2 * np.pi * self.radius * np.minimum(d, 1 - d)


class HyperbolicReference(ReferenceSpace):
    """Points of the hyperbolic base of an elliptic surface with the quotient distance."""

    kind = "hyperbolic"

    def __init__(self, model: EllipticBundle, z, max_length: int = 4):
        z = np.asarray(z, complex)
        self.model = model
        self.max_length = max_length
        dist = model.base_distance(z[:, None], z[None, :], max_length)
        np.fill_diagonal(dist, 0.0)
        super().__init__(z, dist, {"word_length": max_length})

    def distance(self, a, b):
        return self.model.base_distance(a, b, self.max_length)


def hopf_circle_reference(model: SurfaceModel, params) -> CircleReference:
    """Circle of radius ``log|alpha| / (sqrt(2) pi)``."""
    if not isinstance(model, Hopf):
        raise FamilyMismatch(f"expected a Hopf model, got {model.family}")
    return CircleReference(abs(np.log(model.modulus)) / (np.sqrt(2) * np.pi), params)


def inoue_circle_reference(model: SurfaceModel, params) -> CircleReference:
    """Limit circle of an Inoue surface.

    Radii: ``log(alpha)/(2 sqrt(2) pi)`` for ``S_M``, ``log(alpha)/(2 pi)`` for
    ``S^+`` and ``log(alpha)/pi`` for ``S^-`` (the circle of its double cover).
    """
    if isinstance(model, InoueSM):
        radius = np.log(model.alpha) / (2 * np.sqrt(2) * np.pi)
    elif isinstance(model, InoueSMinus):
        radius = np.log(model.alpha) / np.pi
    elif isinstance(model, InoueSPlus):
        radius = np.log(model.alpha) / (2 * np.pi)
    else:
        raise FamilyMismatch(f"expected an Inoue model, got {model.family}")
    return CircleReference(radius, params)


# ---------------------------------------------------------------------------
# correspondences and Gromov-Hausdorff bounds

@dataclass
class Correspondence:
    """Maps between a sampled space and a reference space.

    ``F[i]`` is the reference index of space point ``i``; ``G[j]`` is the
    space-local index of reference point ``j``.
    """

    F: np.ndarray
    G: np.ndarray


def gh_terms(space: SampledMetricSpace, ref: ReferenceSpace, corr: Correspondence) -> dict:
    """The four distortion terms of a pair of maps."""
    F, G = np.asarray(corr.F), np.asarray(corr.G)
    dX, dY = space.dist, ref.dist
    return {
        "distortion_F": float(np.max(np.abs(dX - dY[np.ix_(F, F)]))),
        "section_gap": float(np.max(dX[np.arange(len(F)), G[F]])),
        "distortion_G": float(np.max(np.abs(dY - dX[np.ix_(G, G)]))),
        "reference_gap": float(np.max(dY[np.arange(len(G)), F[G]])),
    }


def gh_upper_bound(space: SampledMetricSpace, ref: ReferenceSpace, corr: Correspondence) -> float:
    """Maximum of the distortion terms; an upper bound for the GH distance."""
    return max(gh_terms(space, ref, corr).values())


def circle_correspondence(space: SampledMetricSpace, ref: CircleReference, circle_param,
                          section_local) -> Correspondence:
    """Nearest-parameter projection to the circle and a given section back.

    Parameters
    ----------
    circle_param : ndarray
        Circle parameter in ``[0, 1)`` of each space point.
    section_local : ndarray
        Space-local index of the section point over each reference point.
    """
    d = np.abs(np.mod(circle_param, 1.0)[:, None] - ref.points[None, :])
    d = np.minimum(d, 1 - d)
    return Correspondence(np.argmin(d, axis=1), np.asarray(section_local))


def equivariant_quotient(space: SampledMetricSpace, involution, tol: float = 1e-6) -> SampledMetricSpace:
    """Quotient by an isometric involution: ``d([x], [y]) = min(d(x, y), d(x, iota y))``.

    Parameters
    ----------
    involution : ndarray
        Permutation of the space-local indices.

    Raises
    ------
    NotAnIsometry
        If the permutation changes some distance by more than ``tol``.
    """
    perm = np.asarray(involution)
    if not np.array_equal(perm[perm], np.arange(len(perm))):
        raise NotAnIsometry("permutation is not an involution")
    err = float(np.max(np.abs(space.dist - space.dist[np.ix_(perm, perm)])))
    if err > tol:
        raise NotAnIsometry(f"involution distorts distances by {err:.3e}")
    reps = np.nonzero(np.arange(len(perm)) <= perm)[0]
    D = np.minimum(space.dist[np.ix_(reps, reps)], space.dist[np.ix_(reps, perm[reps])])
    prov = dict(space.provenance, quotient=True, isometry_error=err)
    return SampledMetricSpace(space.points[reps], space.coords[reps], D, prov)


def quotient_classes(involution) -> np.ndarray:
    """Representative (smaller) index of each point's orbit."""
    perm = np.asarray(involution)
    return np.minimum(np.arange(len(perm)), perm)


# ---------------------------------------------------------------------------
# Hopf fibre diameters

def fiber_collapse_rate(model: Hopf, t: float, fibre_points: int = 1500, k: int = 12,
                        candidates: int = 48, max_angle_deg: float = 15.0, seed: int = 0) -> float:
    """Diameter of a unit-sphere fibre using only nearly horizontal edges.

    Edges are chords whose direction makes an angle of at most
    ``max_angle_deg`` with the horizontal distribution; they are weighted
    with the true length for ``omega(t)``.
    """
    if not isinstance(model, Hopf):
        raise FamilyMismatch(f"expected a Hopf model, got {model.family}")
    model.check_time(t)
    u = sphere_points(fibre_points, 2 * model.n, seed)
    z = u[:, 0::2] + 1j * u[:, 1::2]
    tree = cKDTree(u)
    _, nb = tree.query(u, k=candidates + 1)
    i = np.repeat(np.arange(len(z)), candidates)
    j = nb[:, 1:].ravel()
    mid = 0.5 * (z[i] + z[j])
    ang = model.horizontal_angle(mid, z[j] - z[i])
    ok = ang <= np.deg2rad(max_angle_deg)
    i, j = i[ok], j[ok]
    L = segment_lengths(model, t, z[i], z[j])
    order = np.lexsort((L, i))
    i, j, L = i[order], j[order], L[order]
    first = np.searchsorted(i, np.arange(len(z)))
    rank = np.arange(len(i)) - first[i]
    sel = rank < k
    graph = _min_symmetric(i[sel], j[sel], L[sel], len(z))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise DisconnectedGraph(f"horizontal graph has {ncomp} components")
    D = dijkstra(graph, directed=False)
    return float(np.max(D))


# ---------------------------------------------------------------------------
# export

def write_distance_matrix(space: SampledMetricSpace, path) -> None:
    """Binary export: point count (little-endian uint64) then row-major float64 entries."""
    m = len(space.dist)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", m))
        fh.write(np.ascontiguousarray(space.dist, dtype="<f8").tobytes())


def read_distance_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (m,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * m * m), dtype="<f8")
    return data.reshape(m, m).copy()
