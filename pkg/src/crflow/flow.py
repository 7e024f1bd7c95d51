"""Time evolution: exact ansatz integration and the discrete torus Monge-Ampere flow."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExceeded, FamilyMismatch, Instability, PositivityLost
from .hermitian import MetricField, chern_ricci_fd
from .models.base import AnsatzState, SurfaceModel, check_ansatz
from .models.torus import Torus


@dataclass
class FlowTrajectory:
    """Times, states and per-step diagnostics of a flow run.

    ``states`` holds :class:`AnsatzState` objects for ansatz runs and potential
    grids (only at stored steps) for torus runs; ``diagnostics`` holds one
    dict per recorded time.
    """

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    columns: tuple = ()
    model: Optional[SurfaceModel] = None

    def rows(self):
        return [[d.get(c, "") for c in self.columns] for d in self.diagnostics]

    def column(self, name) -> np.ndarray:
        return np.array([d[name] for d in self.diagnostics], dtype=float)

    def to_csv(self, path, extra_columns=()):
        """Write one row per recorded time; floats use ``repr`` for exact round trips."""
        cols = tuple(self.columns) + tuple(c for c in extra_columns if c not in self.columns)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for d in self.diagnostics:
                writer.writerow([_fmt(d.get(c, "")) for c in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------------------
# ansatz

def evolve_ansatz(model: SurfaceModel, t_end: float, steps: int, max_steps: int = 10**6) -> FlowTrajectory:
    """Integrate the ansatz ODE ``c' = ansatz_ricci(c)`` with classical RK4.

    The right-hand side is constant for every family, so the scheme is exact
    up to rounding.

    Raises
    ------
    TimeOutOfRange
        If ``t_end`` is not inside ``[0, T)``.
    AnsatzNotPositive
        If an intermediate state stops being positive.
    BudgetExceeded
        If ``steps`` exceeds ``max_steps``.
    """
    if steps > max_steps:
        raise BudgetExceeded(f"{steps} steps requested, budget is {max_steps}")
    if steps < 1:
        raise ValueError("need at least one step")
    model.check_time(t_end)
    state = model.ansatz_initial()
    dt = t_end / steps
    names = model.ansatz_names
    traj = FlowTrajectory(columns=("t",) + tuple(names), model=model)

    def record(s: AnsatzState):
        traj.times.append(s.t)
        traj.states.append(s)
        row = {"t": s.t}
        row.update(s.as_dict())
        traj.diagnostics.append(row)

    def velocity(c, t):
        check_ansatz(model, c)
        return model.ansatz_velocity(AnsatzState(c, t, names))

    record(state)
    for k in range(steps):
        c, t = state.coefficients, state.t
        k1 = velocity(c, t)
        k2 = velocity(c + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = velocity(c + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = velocity(c + dt * k3, t + dt)
        c_new = c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        check_ansatz(model, c_new)
        state = AnsatzState(c_new, (k + 1) * dt, names)
        record(state)
    return traj


def ansatz_field(model: SurfaceModel, state: AnsatzState) -> MetricField:
    """The metric reconstructed from ansatz coefficients, as a static field."""
    c = np.array(state.coefficients)
    return MetricField(lambda p, t: model.ansatz_metric(c, p), model.n, model.contains,
                       (state.t, state.t), state.t, name=f"{model.family}:ansatz")


# ---------------------------------------------------------------------------
# validation of the closed forms

def validation_points(model: SurfaceModel, count: int, seed: int = 0) -> np.ndarray:
    """Random points of the model's fundamental-domain sample, in well-scaled chart position."""
    rng = np.random.default_rng(seed)
    sample = model.sample(seed=seed)
    idx = rng.choice(len(sample.points), size=count, replace=False)
    return model.chart_representative(sample.points[np.sort(idx)])


def validate_flow(model: SurfaceModel, samples: int = 50, h: float = 1e-3, dt: float = 1e-4,
                  t_max: float = 10.0, seed: int = 0) -> dict:
    """Compare ``d/dt omega(t)`` with ``-Ric(omega(t))`` at random ``(p, t)``.

    The time derivative is a central difference with step ``dt``; the Ricci
    form is computed by :func:`chern_ricci_fd` with step ``h``.

    Returns
    -------
    dict
        ``max_deviation`` (max abs entry difference) and the sampled times.
    """
    rng = np.random.default_rng(seed + 1)
    T = model.max_existence_time()
    top = 0.9 * T if np.isfinite(T) else t_max
    times = rng.uniform(dt, top, samples)
    points = validation_points(model, samples, seed)
    field = model.flow_field()
    worst = 0.0
    for p, t in zip(points, times):
        dg = (field.matrix(p, t + dt) - field.matrix(p, t - dt)) / (2 * dt)
        ric = chern_ricci_fd(field, p, t, h).matrix
        worst = max(worst, float(np.max(np.abs(dg[0] + ric))))
    return {"family": model.family, "max_deviation": worst, "samples": samples,
            "times": times.tolist()}


# ---------------------------------------------------------------------------
# torus Monge-Ampere flow

def volume_factor(n: int) -> float:
    """``omega^n = n! 2^n det(g) dx_1 dy_1 ... dx_n dy_n``."""
    return float(factorial(n) * 2**n)


@dataclass
class TorusPotentialGrid:
    """Values of a real potential on a periodic grid of the standard torus.

    ``values`` has shape ``(N,) * 2n`` with axes ordered ``(x_1, y_1, ..., x_n, y_n)``.
    """

    values: np.ndarray
    spacing: float
    lattice: np.ndarray

    @classmethod
    def zeros(cls, model: Torus, N: int) -> "TorusPotentialGrid":
        return cls(np.zeros((N,) * (2 * model.n)), 1.0 / N, model.lattice)

    def copy(self, values=None):
        return TorusPotentialGrid(self.values.copy() if values is None else values, self.spacing, self.lattice)


class TorusBackground:
    """Discrete operators and the initial metric on an ``N^(2n)`` torus grid.

    First derivatives use the fourth-order central stencil; second
    derivatives are compositions of first derivatives. These operators
    commute and are skew-adjoint, so discrete summation by parts holds
    exactly and ``sum det(I + i d dbar u)`` does not depend on ``u``.
    The initial metric is built with the same operators, ``g0 = base + i d dbar psi``.
    """

    def __init__(self, model: Torus, N: int = 12):
        if not isinstance(model, Torus):
            raise FamilyMismatch(f"the Monge-Ampere reduction needs a torus, got {model.family}")
        if not np.allclose(model.lattice, np.concatenate([np.eye(model.n), 1j * np.eye(model.n)])):
            raise ValueError("the grid flow assumes the standard lattice")
        self.model = model
        self.n = model.n
        self.N = int(N)
        self.h = 1.0 / self.N
        axes = np.arange(self.N) * self.h
        self.coords = np.stack(np.meshgrid(*([axes] * (2 * self.n)), indexing="ij"), axis=-1)
        self.psi = model.psi_amplitude * np.cos(2 * np.pi * self.coords @ model.psi_wave)
        self.g0 = model.base + self.complex_hessian(self.psi)
        self.det0 = hermitian_det(self.g0)
        if np.any(self.det0 <= 0) or np.any(np.real(self.g0[..., 0, 0]) <= 0):
            raise PositivityLost("initial metric is not positive on the grid")
        self.cell = model.covolume / self.N ** (2 * self.n)
        self.kappa = volume_factor(self.n)

    def d1(self, f, axis):
        r = np.roll
        return (8 * (r(f, -1, axis) - r(f, 1, axis)) - (r(f, -2, axis) - r(f, 2, axis))) / (12 * self.h)

    def gradient(self, f):
        """All real first derivatives, shape ``(2n,) + f.shape``."""
        return np.stack([self.d1(f, a) for a in range(2 * self.n)])

    def complex_hessian(self, f, grad=None):
        """``d_i dbar_j f`` on the grid, shape ``f.shape + (n, n)``."""
        n = self.n
        D = self.gradient(f) if grad is None else grad
        R = {}
        for a in range(2 * n):
            for b in range(a, 2 * n):
                R[a, b] = R[b, a] = self.d1(D[a], b)
        H = np.empty(f.shape + (n, n), complex)
        for i in range(n):
            for j in range(n):
                xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
                H[..., i, j] = 0.25 * ((R[xi, xj] + R[yi, yj]) + 1j * (R[xi, yj] - R[yi, xj]))
        return H

    def holomorphic_gradient(self, f, grad=None):
        """``d_i f = (d/dx_i - i d/dy_i) f / 2``, shape ``f.shape + (n,)``."""
        D = self.gradient(f) if grad is None else grad
        return np.stack([0.5 * (D[2 * i] - 1j * D[2 * i + 1]) for i in range(self.n)], axis=-1)

    def metric(self, phi):
        """``g_phi = g0 + i d dbar phi`` and its determinant."""
        g = self.g0 + self.complex_hessian(phi)
        return g, hermitian_det(g)

    def stable_dt(self) -> float:
        """Largest RK4-stable step for the linearised flow at the initial metric.

        Uses the spectral radius ``1.8829 / h^2`` of the composed fourth-order
        second difference and the real RK4 stability interval ``2.785``.
        """
        ginv_diag = np.real(np.diagonal(hermitian_inv(self.g0), axis1=-2, axis2=-1))
        lam = 0.25 * 2 * 1.8829 / self.h**2 * float(np.max(np.sum(ginv_diag, axis=-1)))
        return 2.785 / lam


def hermitian_det(g):
    """Real determinant of a grid of Hermitian matrices (closed form for 2x2)."""
    if g.shape[-1] == 2:
        return np.real(g[..., 0, 0]) * np.real(g[..., 1, 1]) - np.abs(g[..., 0, 1]) ** 2
    return np.real(np.linalg.det(g))


def hermitian_inv(g, det=None):
    """Inverse of a grid of Hermitian matrices (closed form for 2x2)."""
    if g.shape[-1] != 2:
        return np.linalg.inv(g)
    det = hermitian_det(g) if det is None else det
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1] / det
    out[..., 1, 1] = g[..., 0, 0] / det
    out[..., 0, 1] = -g[..., 0, 1] / det
    out[..., 1, 0] = -g[..., 1, 0] / det
    return out


def ma_velocity(background: TorusBackground, phi: np.ndarray, F: np.ndarray):
    """``dphi/dt = log(det g_phi / det g0) - F`` together with ``g_phi`` and its determinant."""
    g, det = background.metric(phi)
    if np.any(det <= 0) or np.any(np.real(g[..., 0, 0]) <= 0):
        raise PositivityLost("g_phi lost positivity")
    return np.log(det / background.det0) - F, g, det


def evolve_torus_ma(grid0: TorusPotentialGrid, background: TorusBackground, F: np.ndarray,
                    t_end: float, dt: float, store_every: int = 100, check_energy: bool = True,
                    energy_tol: float = 1e-9, max_halvings: int = 10,
                    monitor: Optional[Callable] = None) -> FlowTrajectory:
    """Integrate the parabolic complex Monge-Ampere flow on the torus with RK4.

    Parameters
    ----------
    grid0 : TorusPotentialGrid
        Initial potential (usually zero).
    background : TorusBackground
        Grid operators and ``omega_0``.
    F : ndarray
        Ricci potential grid.
    t_end, dt : float
        Final time and nominal step; ``dt`` must not exceed ``background.stable_dt()``.
    store_every : int
        Keep the potential every this many steps (the final one is always kept).
    check_energy : bool
        Raise :class:`Instability` if the Mabuchi energy increases by more
        than ``energy_tol`` (relative to ``max(1, |energy|)``) in one step.

    Notes
    -----
    A step that produces a non-positive metric is retried with half the step,
    at most ``max_halvings`` times, before :class:`PositivityLost` is raised.
    """
    from .functionals import mabuchi_from_metric, mabuchi_derivative_formula

    if dt > background.stable_dt():
        raise ValueError(f"dt={dt} exceeds the stability limit {background.stable_dt():.3e}")
    B = background
    cols = ("t", "volume", "sup_phidot", "mabuchi", "derivative_formula")
    traj = FlowTrajectory(columns=cols)

    def diagnostics(phi, t):
        v, g, det = ma_velocity(B, phi, F)
        row = {"t": t, "volume": B.kappa * B.cell * float(np.sum(det)),
               "sup_phidot": float(np.max(np.abs(v))),
               "mabuchi": mabuchi_from_metric(B, det, F),
               "derivative_formula": mabuchi_derivative_formula(B, g, det, v)}
        if monitor is not None:
            row.update(monitor(phi, t))
        return row

    def rk4(phi, h):
        k1 = ma_velocity(B, phi, F)[0]
        k2 = ma_velocity(B, phi + 0.5 * h * k1, F)[0]
        k3 = ma_velocity(B, phi + 0.5 * h * k2, F)[0]
        k4 = ma_velocity(B, phi + h * k3, F)[0]
        return phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    phi = grid0.values.copy()
    t = 0.0
    step = 0
    row = diagnostics(phi, t)
    traj.diagnostics.append(row)
    traj.times.append(t)
    traj.states.append(grid0.copy(phi.copy()))
    while t < t_end - 1e-12:
        h = min(dt, t_end - t)
        for attempt in range(max_halvings + 1):
            try:
                new = phi
                for _ in range(2 ** attempt):
                    new = rk4(new, h / 2 ** attempt)
                break
            except PositivityLost:
                if attempt == max_halvings:
                    raise
        prev = row
        row = diagnostics(new, t + h)  # raises PositivityLost on a bad final state
        phi, t, step = new, t + h, step + 1
        if check_energy and row["mabuchi"] > prev["mabuchi"] + energy_tol * max(1.0, abs(prev["mabuchi"])):
            raise Instability(f"Mabuchi energy increased at t={t:.4f}: "
                              f"{prev['mabuchi']!r} -> {row['mabuchi']!r}")
        traj.diagnostics.append(row)
        traj.times.append(t)
        if step % store_every == 0 or t >= t_end - 1e-12:
            traj.states.append(grid0.copy(phi.copy()))
    traj.final = grid0.copy(phi)
    return traj


def advance_torus(background: TorusBackground, phi: np.ndarray, F: np.ndarray, duration: float,
                  substeps: int) -> np.ndarray:
    """RK4 over ``duration`` (may be negative) in ``substeps`` equal steps."""
    h = duration / substeps
    for _ in range(substeps):
        k1 = ma_velocity(background, phi, F)[0]
        k2 = ma_velocity(background, phi + 0.5 * h * k1, F)[0]
        k3 = ma_velocity(background, phi + 0.5 * h * k2, F)[0]
        k4 = ma_velocity(background, phi + h * k3, F)[0]
        phi = phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi
