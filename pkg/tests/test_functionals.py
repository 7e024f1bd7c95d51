import numpy as np
import pytest

from crflow.errors import FamilyMismatch, PositivityLost, TimeOutOfRange
from crflow.flow import TorusBackground, TorusPotentialGrid, evolve_torus_ma, hermitian_det, volume_factor
from crflow.functionals import (energy_report, mabuchi_energy, normalized_limit_distance, ricci_potential_F,
                                ricci_potential_residual, total_volume, volume_ratio)
from crflow.models import Torus, default_model, sample_fundamental_domain


def psi_background(N=8):
    return TorusBackground(Torus(psi_amplitude=0.05, psi_wave=(1, 0, 0, 0)), N)


def test_volume_factor():
    assert volume_factor(2) == 8.0


def test_hopf_volume_halves_at_quarter():
    m = default_model("hopf")
    s = sample_fundamental_domain(m, (16, 500))
    assert len(s) == 8000
    assert volume_ratio(m, 0.25, s) == pytest.approx(0.5, abs=1e-3)


def test_sm_volume_triples_at_eight():
    assert volume_ratio(default_model("inoue-sm"), 8.0) == pytest.approx(3.0, abs=1e-3)


@pytest.mark.parametrize("family", ["hopf", "inoue-sm", "elliptic"])
def test_volume_ratio_at_zero(family):
    assert volume_ratio(default_model(family), 0.0) == 1.0


def test_flat_torus_volume():
    # omega^2 = 8 det g dV on a unit-covolume lattice
    assert total_volume(Torus(), 3.0) == pytest.approx(8.0, rel=1e-12)


def test_volume_out_of_range():
    with pytest.raises(TimeOutOfRange):
        total_volume(default_model("hopf"), 0.6)


# -- Ricci potential --------------------------------------------------------------------

def test_flat_ricci_potential_is_zero():
    np.testing.assert_array_equal(ricci_potential_F(TorusBackground(Torus(), 6)), 0.0)


def test_ricci_potential_residual_and_normalization():
    B = psi_background(12)
    F = ricci_potential_F(B)
    assert np.ptp(F) > 1e-3
    assert ricci_potential_residual(B, F) <= 1e-8
    lhs, rhs = np.sum(np.exp(F) * B.det0), np.sum(B.det0)
    assert abs(lhs - rhs) / rhs <= 1e-10


def test_ricci_potential_matches_exact_log_det():
    # psi = A cos(2 pi x1) gives g0 = diag(1 - pi^2 A cos(2 pi x1), 1) exactly
    B = psi_background(12)
    x1 = B.coords[..., 0]
    det_exact = 1 - np.pi**2 * 0.05 * np.cos(2 * np.pi * x1)
    # fourth-order stencil error on the 12-point grid is about 5e-3
    np.testing.assert_allclose(B.det0, det_exact, rtol=1e-2)
    np.testing.assert_allclose(hermitian_det(B.g0), B.det0)


# -- Mabuchi -------------------------------------------------------------------------------

def test_flat_mabuchi_is_zero():
    B = TorusBackground(Torus(), 6)
    assert mabuchi_energy(B, TorusPotentialGrid.zeros(B.model, 6), ricci_potential_F(B)) == 0.0


def test_mabuchi_rejects_non_positive_potential():
    B = TorusBackground(Torus(), 6)
    phi = -0.5 * np.cos(2 * np.pi * B.coords[..., 0])
    with pytest.raises(PositivityLost):
        energy_report(B, phi, ricci_potential_F(B), 0.0)


def test_mabuchi_on_non_torus_is_error():
    with pytest.raises(FamilyMismatch):
        TorusBackground(default_model("elliptic"))


def test_mabuchi_decreases_and_derivative_identity_short_run():
    B = psi_background(8)
    F = ricci_potential_F(B)
    traj = evolve_torus_ma(TorusPotentialGrid.zeros(B.model, 8), B, F, 1.0, B.stable_dt(), store_every=20)
    mab = traj.column("mabuchi")
    assert np.all(np.diff(mab) <= 1e-9)
    assert np.all(traj.column("derivative_formula") <= 1e-10)
    for phi, t in zip(traj.states[:3], traj.times[::20][:3]):
        rep = energy_report(B, phi, F, t)
        assert rep.relative_error <= 1e-4


# -- limit distance ----------------------------------------------------------------------

def test_sm_limit_distance_decays_like_inverse_time():
    m = default_model("inoue-sm")
    s = m.sample()
    d100, d200 = normalized_limit_distance(m, 100.0, s), normalized_limit_distance(m, 200.0, s)
    assert d100 <= 1.01 * d200 * 2
    assert d100 * 100 == pytest.approx(d200 * 200, rel=0.01)


def test_hopf_limit_distance_near_existence_time():
    m = default_model("hopf")
    assert normalized_limit_distance(m, 0.5 - 1e-6) <= 2e-6


@pytest.mark.parametrize("family", ["hopf", "inoue-sm", "inoue-splus", "elliptic"])
def test_limit_distance_positive(family):
    m = default_model(family)
    T = m.max_existence_time()
    assert normalized_limit_distance(m, 0.49 if np.isfinite(T) else 1e4) > 0


def test_limit_distance_undefined_on_torus():
    with pytest.raises(FamilyMismatch):
        normalized_limit_distance(Torus(), 1.0)
