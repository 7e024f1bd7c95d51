import numpy as np
import pytest

from crflow.errors import DisconnectedGraph, FamilyMismatch, NotAnIsometry, TimeOutOfRange
from crflow.metric_spaces import (CircleReference, Correspondence, SampledMetricSpace, build_space,
                                  circle_correspondence, equivariant_quotient, fiber_collapse_rate,
                                  gh_terms, gh_upper_bound, hopf_circle_reference, quotient_classes,
                                  read_distance_matrix, write_distance_matrix)
from crflow.models import Torus, default_model


def circle_space(count, radius=1.0, shift=0.0):
    u = (np.arange(count) + shift) / count
    ref = CircleReference(radius, u)
    return SampledMetricSpace(np.arange(count), np.exp(2j * np.pi * u)[:, None], ref.dist.copy()), ref


# -- building ------------------------------------------------------------------------

def test_flat_torus_distances():
    model = Torus(n=1)
    sample = model.sample(40)
    space = build_space(model, 0.0, sample, k_neighbors=48, n_select=None)
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, len(space), size=(2, 100))
    keep = i != j
    exact = model.distance(space.coords[i[keep]], space.coords[j[keep]])
    rel = np.abs(space.dist[i[keep], j[keep]] - exact) / exact
    assert np.max(rel) <= 0.02


def test_single_point_space():
    model = Torus(n=1)
    space = build_space(model, 0.0, model.sample(1), k_neighbors=1, n_select=None)
    np.testing.assert_array_equal(space.dist, [[0.0]])


def test_disconnected_graph_detected():
    model = Torus(n=1)
    with pytest.raises(DisconnectedGraph):
        build_space(model, 0.0, model.sample(20), k_neighbors=1, n_select=None)


@pytest.fixture(scope="module")
def hopf_space():
    m = default_model("hopf")
    return build_space(m, 0.0, m.sample((16, 500)), k_neighbors=16, n_select=400)


def test_metric_axioms(hopf_space):
    D = hopf_space.dist
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    assert np.all(D[~np.eye(len(D), dtype=bool)] > 0)
    worst = max(float(np.max(D[i][None, :] - (D[i][:, None] + D))) for i in range(len(D)))
    assert worst <= 1e-9


@pytest.mark.slow
def test_hopf_diameter_self_convergence(hopf_space):
    m = default_model("hopf")
    fine = build_space(m, 0.0, m.sample((32, 1000)), k_neighbors=16, n_select=400)
    assert abs(fine.diameter() - hopf_space.diameter()) <= 0.1 * fine.diameter()


def test_binary_round_trip(tmp_path, hopf_space):
    path = tmp_path / "d.bin"
    write_distance_matrix(hopf_space, path)
    raw = path.read_bytes()
    assert int.from_bytes(raw[:8], "little") == len(hopf_space)
    assert len(raw) == 8 + 8 * len(hopf_space) ** 2
    np.testing.assert_array_equal(read_distance_matrix(path), hopf_space.dist)


# -- Gromov-Hausdorff bounds ----------------------------------------------------------

def test_identical_spaces_give_zero():
    space, ref = circle_space(50)
    ident = np.arange(50)
    assert gh_upper_bound(space, ref, Correspondence(ident, ident)) == 0.0


def test_circle_against_point_gives_half_circumference():
    rho = 0.7
    _, circle = circle_space(64, rho)
    point = SampledMetricSpace(np.array([0]), np.zeros((1, 1)), np.zeros((1, 1)))
    # the circle plays the sampled space, the point the reference
    circ_space = SampledMetricSpace(np.arange(64), np.zeros((64, 1)), circle.dist)
    ref = CircleReference(0.0, np.zeros(1))
    corr = Correspondence(np.zeros(64, int), np.array([0]))
    assert gh_upper_bound(circ_space, ref, corr) == pytest.approx(np.pi * rho, rel=1e-12)
    assert len(point) == 1


def test_better_section_does_not_increase_bound():
    space, ref = circle_space(80)
    rng = np.random.default_rng(1)
    F = np.arange(80)
    noisy_G = (np.arange(80) + rng.integers(-3, 4, 80)) % 80
    worse = gh_upper_bound(space, ref, Correspondence(F, noisy_G))
    better_G = noisy_G.copy()
    better_G[::2] = np.arange(80)[::2]
    better = gh_upper_bound(space, ref, Correspondence(F, better_G))
    best = gh_upper_bound(space, ref, Correspondence(F, np.arange(80)))
    assert best <= better <= worse


def test_gh_terms_are_the_four_distortions():
    space, ref = circle_space(20)
    terms = gh_terms(space, ref, Correspondence(np.arange(20), np.arange(20)))
    assert set(terms) == {"distortion_F", "section_gap", "distortion_G", "reference_gap"}


def test_circle_correspondence_projects_to_nearest_parameter():
    space, _ = circle_space(30, shift=0.1)
    ref = CircleReference(1.0, np.arange(10) / 10)
    corr = circle_correspondence(space, ref, (np.arange(30) + 0.1) / 30, np.arange(0, 30, 3))
    np.testing.assert_array_equal(corr.F, np.round((np.arange(30) + 0.1) / 3).astype(int) % 10)


def test_hopf_reference_requires_hopf():
    with pytest.raises(FamilyMismatch):
        hopf_circle_reference(default_model("torus"), np.zeros(3))


# -- quotients ------------------------------------------------------------------------

def test_antipodal_quotient_is_half_circle():
    M, L = 60, 2 * np.pi
    space, _ = circle_space(M, L / (2 * np.pi))
    perm = (np.arange(M) + M // 2) % M
    q = equivariant_quotient(space, perm)
    assert len(q) == M // 2
    half = CircleReference(L / 2 / (2 * np.pi), 2 * np.arange(M // 2) / M)
    np.testing.assert_allclose(q.dist, half.dist, atol=1e-12)
    np.testing.assert_array_equal(quotient_classes(perm)[: M // 2], np.arange(M // 2))


def test_identity_involution_keeps_space():
    space, _ = circle_space(25)
    q = equivariant_quotient(space, np.arange(25))
    np.testing.assert_array_equal(q.dist, space.dist)


def test_non_isometric_involution_rejected():
    space, _ = circle_space(24)
    perm = np.arange(24)
    perm[[0, 5]] = perm[[5, 0]]
    with pytest.raises(NotAnIsometry):
        equivariant_quotient(space, perm)


def test_non_involution_rejected():
    space, _ = circle_space(12)
    with pytest.raises(NotAnIsometry):
        equivariant_quotient(space, (np.arange(12) + 1) % 12)


# -- fibre collapse ------------------------------------------------------------------

def test_fibre_ratio_at_three_eighths():
    m = default_model("hopf")
    ratio = fiber_collapse_rate(m, 0.375) / fiber_collapse_rate(m, 0.0)
    assert ratio == pytest.approx(0.5, rel=0.2)


def test_fibre_rate_positive_at_zero_and_checks_time():
    m = default_model("hopf")
    assert fiber_collapse_rate(m, 0.0, fibre_points=400) > 0
    with pytest.raises(TimeOutOfRange):
        fiber_collapse_rate(m, 0.5)
    with pytest.raises(FamilyMismatch):
        fiber_collapse_rate(default_model("inoue-sm"), 1.0)
