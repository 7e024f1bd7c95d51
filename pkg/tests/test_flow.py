import numpy as np
import pytest

from crflow.errors import FamilyMismatch, TimeOutOfRange
from crflow.flow import (TorusBackground, TorusPotentialGrid, ansatz_field, evolve_ansatz, evolve_torus_ma,
                         validate_flow, validation_points)
from crflow.functionals import ricci_potential_F
from crflow.models import Torus, closed_form_metric, default_model

ANSATZ_FAMILIES = ["hopf", "hopf3", "inoue-sm", "inoue-splus", "inoue-splus-m1", "inoue-sminus", "elliptic"]


def psi_torus():
    return Torus(psi_amplitude=0.05, psi_wave=(1, 0, 0, 0))


# -- ansatz ------------------------------------------------------------------------

def test_sm_evolution_to_four():
    traj = evolve_ansatz(default_model("inoue-sm"), 4.0, 8)
    np.testing.assert_allclose(traj.states[-1].coefficients, [2.0, 1.0], atol=1e-12)
    assert traj.times[-1] == pytest.approx(4.0, abs=1e-15)


def test_hopf_evolution_to_quarter():
    traj = evolve_ansatz(default_model("hopf"), 0.25, 5)
    np.testing.assert_allclose(traj.states[-1].coefficients, [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("family", ANSATZ_FAMILIES)
def test_zero_time_returns_initial_state(family):
    m = default_model(family)
    traj = evolve_ansatz(m, 0.0, 1)
    np.testing.assert_array_equal(traj.states[-1].coefficients, m.ansatz_initial().coefficients)


@pytest.mark.parametrize("family", ANSATZ_FAMILIES)
def test_trajectory_matches_closed_form(family):
    m = default_model(family)
    T = m.max_existence_time()
    t_end = 0.9 * T if np.isfinite(T) else 300.0
    traj = evolve_ansatz(m, t_end, 12)
    pts = validation_points(m, 20, seed=7)
    for s in traj.states:
        g = ansatz_field(m, s).matrix(pts)
        exact = closed_form_metric(m, s.t).matrix(pts)
        np.testing.assert_allclose(g, exact, rtol=1e-12, atol=1e-12 * np.max(np.abs(exact)))
    assert np.all(np.diff(traj.times) > 0)


@pytest.mark.parametrize("family", ["hopf", "inoue-sm", "inoue-splus", "elliptic"])
def test_semigroup_property(family):
    m = default_model(family)
    T = m.max_existence_time()
    t, s = (0.2, 0.15) if np.isfinite(T) else (30.0, 45.0)
    direct = evolve_ansatz(m, t + s, 7).states[-1].coefficients
    mid = evolve_ansatz(m, t, 3).states[-1]
    # restart from the intermediate state and integrate the constant velocity for time s
    v = m.ansatz_velocity(mid)
    np.testing.assert_allclose(mid.coefficients + s * v, direct, atol=1e-10)


def test_evolve_ansatz_rejects_time_past_existence():
    with pytest.raises(TimeOutOfRange):
        evolve_ansatz(default_model("hopf"), 0.5, 10)


def test_trajectory_csv_header(tmp_path):
    traj = evolve_ansatz(default_model("inoue-sm"), 1.0, 2)
    traj.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,a,b"
    assert len(lines) == 4


# -- validation ---------------------------------------------------------------------

@pytest.mark.parametrize("family", ["inoue-splus", "hopf3"])
def test_validate_flow_examples(family):
    assert validate_flow(default_model(family))["max_deviation"] <= 1e-4


def test_validate_flow_flat_torus_is_exact():
    assert validate_flow(Torus())["max_deviation"] <= 1e-10


# -- torus Monge-Ampere -------------------------------------------------------------

def test_flat_torus_is_stationary():
    B = TorusBackground(Torus(), 6)
    F = ricci_potential_F(B)
    np.testing.assert_array_equal(F, 0.0)
    traj = evolve_torus_ma(TorusPotentialGrid.zeros(B.model, 6), B, F, 0.05, 0.5 * B.stable_dt())
    np.testing.assert_array_equal(traj.final.values, 0.0)
    assert traj.column("sup_phidot").max() == 0.0


def test_volume_is_conserved_along_flow():
    B = TorusBackground(psi_torus(), 8)
    F = ricci_potential_F(B)
    traj = evolve_torus_ma(TorusPotentialGrid.zeros(B.model, 8), B, F, 0.5, B.stable_dt())
    vol = traj.column("volume")
    assert np.max(np.abs(vol - vol[0])) / vol[0] <= 1e-6


def test_step_above_stability_limit_rejected():
    B = TorusBackground(psi_torus(), 8)
    with pytest.raises(ValueError):
        evolve_torus_ma(TorusPotentialGrid.zeros(B.model, 8), B, ricci_potential_F(B), 0.1, 2 * B.stable_dt())


def test_background_requires_torus():
    with pytest.raises(FamilyMismatch):
        TorusBackground(default_model("inoue-sm"), 8)


@pytest.mark.slow
def test_ma_flow_self_convergence_between_grids():
    finals = {}
    for N in (8, 12):
        B = TorusBackground(psi_torus(), N)
        F = ricci_potential_F(B)
        traj = evolve_torus_ma(TorusPotentialGrid.zeros(B.model, N), B, F, 20.0, 0.95 * B.stable_dt(),
                               store_every=10**9)
        if N == 12:
            assert traj.column("sup_phidot")[-1] < 1e-4
        # nodes shared by both grids sit at multiples of 1/4
        finals[N] = traj.final.values[(slice(None, None, N // 4),) * 4]
    assert np.max(np.abs(finals[8] - finals[12])) <= 1e-3
