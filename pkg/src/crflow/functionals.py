"""Volumes, the Ricci potential and the Mabuchi energy along the flows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FamilyMismatch
from .flow import TorusBackground, advance_torus, hermitian_inv, ma_velocity, volume_factor
from .hermitian import det_g
from .models.base import SampleSet, SurfaceModel
from .models.torus import Torus


def total_volume(model: SurfaceModel, t: float, sample: SampleSet | None = None) -> float:
    """``int_M omega(t)^n`` by the midpoint rule on the sampler's cells."""
    model.check_time(t)
    sample = model.sample() if sample is None else sample
    det = det_g(model.metric(sample.points, t))
    return volume_factor(model.n) * float(np.sum(det * sample.weights))


def volume_ratio(model: SurfaceModel, t: float, sample: SampleSet | None = None) -> float:
    sample = model.sample() if sample is None else sample
    return total_volume(model, t, sample) / total_volume(model, 0.0, sample)


def expected_volume_ratio(model: SurfaceModel, t: float) -> float:
    """Closed-form ``Vol(t)/Vol(0)`` for the families with an exact solution."""
    laws = {"hopf": lambda: (1 - model.n * t) ** (model.n - 1),
            "inoue-sm": lambda: 1 + t / 4,
            "inoue-splus": lambda: 1 + t / 2,
            "inoue-sminus": lambda: 1 + t / 2,
            "elliptic": lambda: 1 + t / 2,
            "torus": lambda: 1.0}
    return laws[model.family]()


def ricci_form_grid(background: TorusBackground, det: np.ndarray) -> np.ndarray:
    """Discrete ``-i d dbar log det g`` with the grid operators."""
    return -background.complex_hessian(np.log(det))


def ricci_potential_F(background: TorusBackground) -> np.ndarray:
    """Potential ``F`` with ``i d dbar F = Ric(omega_0)`` and ``int e^F omega_0^n = int omega_0^n``.

    On the grid ``F = -log det g0 + c`` with ``c`` fixed by the normalisation.
    """
    det0 = background.det0
    c = np.log(np.sum(det0) / det0.size)
    return -np.log(det0) + c


def ricci_potential_residual(background: TorusBackground, F: np.ndarray) -> float:
    """Sup-norm of ``i d dbar F - Ric(omega_0)`` on the grid."""
    return float(np.max(np.abs(background.complex_hessian(F) - ricci_form_grid(background, background.det0))))


def mabuchi_from_metric(background: TorusBackground, det: np.ndarray, F: np.ndarray) -> float:
    B = background
    integrand = (np.log(det / B.det0) - F) * det + F * B.det0
    return B.kappa * B.cell * float(np.sum(integrand))


def mabuchi_energy(background: TorusBackground, phi, F: np.ndarray) -> float:
    """``int (log(omega_phi^n / omega_0^n) - F) omega_phi^n + int F omega_0^n``."""
    phi = getattr(phi, "values", phi)
    _, det = background.metric(phi)
    return mabuchi_from_metric(background, det, F)


def gradient_norm2(background: TorusBackground, g: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``|d f|^2_g = g^{i jbar} d_i f conj(d_j f)`` for real ``f``."""
    xi = background.holomorphic_gradient(f)
    ginv = hermitian_inv(g)
    return np.real(np.einsum("...i,...ji,...j->...", xi, ginv, np.conj(xi)))


def mabuchi_derivative_formula(background: TorusBackground, g, det, phidot) -> float:
    """``-int |d phidot|^2_{omega_phi} omega_phi^n``."""
    B = background
    return -B.kappa * B.cell * float(np.sum(gradient_norm2(B, g, phidot) * det))


def mabuchi_derivative_fd(background: TorusBackground, phi, F, dt: float = 1e-3, substeps: int = 4) -> float:
    """Fourth-order central difference in time of the Mabuchi energy.

    The flow is advanced by ``+-dt`` and ``+-2 dt`` from ``phi`` with RK4.
    """
    phi = getattr(phi, "values", phi)
    vals = {}
    for k in (-2, -1, 1, 2):
        vals[k] = mabuchi_energy(background, advance_torus(background, phi, F, k * dt, abs(k) * substeps), F)
    return (-vals[2] + 8 * vals[1] - 8 * vals[-1] + vals[-2]) / (12 * dt)


@dataclass
class EnergyReport:
    """Mabuchi energy and its time derivative computed two ways at time ``t``."""

    t: float
    mabuchi: float
    derivative_formula: float
    derivative_fd: float

    @property
    def relative_error(self) -> float:
        return abs(self.derivative_fd - self.derivative_formula) / max(abs(self.derivative_formula), 1e-300)

    def as_dict(self) -> dict:
        return {"t": self.t, "mabuchi": self.mabuchi, "derivative_formula": self.derivative_formula,
                "derivative_fd": self.derivative_fd, "derivative_rel_error": self.relative_error}


def energy_report(background: TorusBackground, phi, F, t: float, dt: float = 1e-3) -> EnergyReport:
    phi = getattr(phi, "values", phi)
    v, g, det = ma_velocity(background, phi, F)
    return EnergyReport(t, mabuchi_from_metric(background, det, F),
                        mabuchi_derivative_formula(background, g, det, v),
                        mabuchi_derivative_fd(background, phi, F, dt))


def normalized_limit_distance(model: SurfaceModel, t: float, sample: SampleSet | None = None) -> float:
    """Sup-norm distance to the limit form.

    Uses ``omega(t)/t`` for families whose limit is normalised and ``omega(t)``
    for a finite-time limit.
    """
    if isinstance(model, Torus):
        raise FamilyMismatch("the flat torus has no collapsing limit")
    model.check_time(t)
    sample = model.sample() if sample is None else sample
    g = model.metric(sample.points, t)
    if model.limit_kind == "normalized":
        g = g / t
    return float(np.max(np.abs(g - model.limit_matrix(sample.points))))
