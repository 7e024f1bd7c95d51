import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from crflow import (HermitianForm, MetricField, chern_ricci_fd, complex_hessian_fd, det_g,
                    gauduchon_defect_fd, is_positive, trace_with)
from crflow.errors import NonPositiveDeterminant, SingularMetric, StencilOutOfDomain
from crflow.flow import validation_points
from crflow.hermitian import pullback
from crflow.models import default_model

FAMILIES = ["hopf", "inoue-sm", "inoue-splus", "inoue-splus-m1", "inoue-sminus", "elliptic"]


def constant_field(matrix):
    matrix = np.asarray(matrix, complex)
    return MetricField(lambda p, t: np.broadcast_to(matrix, (len(p),) + matrix.shape).copy(), len(matrix))


# -- algebra -----------------------------------------------------------------

def test_tricerri_determinant_at_height_two():
    m = default_model("inoue-sm")
    g = m.metric(np.array([[0.3 + 2j, 0.1 - 0.2j]]), 0.0)
    assert det_g(g)[0] == pytest.approx(0.5, abs=1e-12)


def test_vaisman_determinant_at_unit_point():
    m = default_model("elliptic")
    g = m.metric(np.array([[1j, 1.0 + 0j]]), 0.0)
    assert det_g(g)[0] == pytest.approx(4.0, abs=1e-12)


def test_trace_with_itself_is_dimension():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 2, 2)) + 1j * rng.normal(size=(5, 2, 2))
    g = A @ np.conj(np.swapaxes(A, 1, 2)) + np.eye(2)
    np.testing.assert_allclose(trace_with(g, g), 2.0, atol=1e-12)


def test_singular_metric_rejected():
    g = HermitianForm(np.diag([1.0, 1e-13]).astype(complex))
    with pytest.raises(SingularMetric):
        g.inverse()


def test_degenerate_form_is_not_positive():
    assert not is_positive(np.diag([1.0, 0.0]).astype(complex))


def test_non_hermitian_input_rejected():
    with pytest.raises(ValueError):
        HermitianForm(np.array([[1.0, 1.0], [0.0, 1.0]], complex))


# -- finite differences ------------------------------------------------------

def test_flat_metric_has_zero_ricci():
    ric = chern_ricci_fd(constant_field(np.eye(2)), np.array([0.2 + 0.1j, -0.3j]))
    assert np.max(np.abs(ric.matrix)) == 0.0


def test_tricerri_ricci_at_unit_height():
    m = default_model("inoue-sm")
    p = np.array([0.37 + 1j, 0.2 - 0.4j])
    ric = chern_ricci_fd(m.flow_field(), p, 0.0).matrix
    np.testing.assert_allclose(ric, np.diag([-0.25, 0.0]), atol=1e-6)


def test_hopf_ricci_at_unit_vector():
    m = default_model("hopf")
    ric = chern_ricci_fd(m.flow_field(), np.array([1.0 + 0j, 0j]), 0.0).matrix
    # the second-order truncation error at r = 1 is of size h^2
    np.testing.assert_allclose(ric, np.diag([0.0, 2.0]), atol=5e-6)


def _sympy_ricci_oracle():
    """Exact -d dbar log det for a non-Kahler test metric on C^2."""
    x1, y1, x2, y2 = sp.symbols("x1 y1 x2 y2", real=True)
    z, w = x1 + sp.I * y1, x2 + sp.I * y2
    zb, wb = sp.conjugate(z), sp.conjugate(w)
    g = sp.Matrix([[1 + z * zb, sp.Rational(3, 10) * z * wb],
                   [sp.Rational(3, 10) * zb * w, 2 + w * wb + sp.Rational(1, 5) * (z + zb)]])
    u = sp.log(sp.expand(g.det()))
    xs = [(x1, y1), (x2, y2)]
    ric = sp.zeros(2, 2)
    for i in range(2):
        for j in range(2):
            (xi, yi), (xj, yj) = xs[i], xs[j]
            dij = (sp.diff(u, xi, xj) + sp.diff(u, yi, yj) + sp.I * (sp.diff(u, xi, yj) - sp.diff(u, yi, xj))) / 4
            ric[i, j] = -dij
    fn = sp.lambdify((x1, y1, x2, y2), ric, "numpy")
    gfn = sp.lambdify((x1, y1, x2, y2), g, "numpy")
    return fn, gfn


def test_ricci_matches_symbolic_oracle():
    ric_exact, g_exact = _sympy_ricci_oracle()

    def ev(p, t):
        return np.array([np.array(g_exact(q[0].real, q[0].imag, q[1].real, q[1].imag), complex) for q in p])

    field = MetricField(ev, 2)
    pts = np.array([[0.1 + 0.2j, -0.3 + 0.1j], [0.5 - 0.4j, 0.2 + 0.7j], [-0.6j, 1.1 + 0j]])
    fd = chern_ricci_fd(field, pts).matrix
    exact = np.array([np.array(ric_exact(q[0].real, q[0].imag, q[1].real, q[1].imag), complex) for q in pts])
    np.testing.assert_allclose(fd, exact, atol=1e-6)


def test_complex_hessian_of_quadratic_is_exact():
    # f = |z|^2 + Re(z^2 w): d dbar f = [[1, 0], [0, 0]]
    f = lambda q: np.abs(q[:, 0]) ** 2 + np.real(q[:, 0] ** 2 * q[:, 1])
    H = complex_hessian_fd(f, np.array([0.3 + 0.1j, -0.2 + 0.5j]), 1e-2)
    np.testing.assert_allclose(H, [[1, 0], [0, 0]], atol=1e-9)


@pytest.mark.parametrize("family", FAMILIES)
def test_finite_difference_convergence_order(family):
    m = default_model(family)
    pts = validation_points(m, 100, seed=5)
    field = m.flow_field().at(0.0)
    errs = [np.max(np.abs(chern_ricci_fd(field, pts, h=h).matrix - m.ricci(pts))) for h in (1e-2, 5e-3, 2.5e-3)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8), (errs, orders)


def test_conjugation_covariance_under_scaling():
    m = default_model("hopf")
    a, b = 2.0, 3j
    J = np.diag([a, b])

    def pulled(p, t):
        q = p * np.array([a, b])
        return pullback(m.metric(q, t), np.broadcast_to(J, (len(p), 2, 2)))

    field = MetricField(pulled, 2)
    pts = validation_points(m, 10, seed=2) / np.array([a, b])
    lhs = chern_ricci_fd(field, pts, 0.0, h=1e-4).matrix
    rhs = pullback(chern_ricci_fd(m.flow_field(), pts * np.array([a, b]), 0.0, h=1e-4).matrix,
                   np.broadcast_to(J, (len(pts), 2, 2)))
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_stencil_leaving_chart_raises():
    m = default_model("inoue-sm")
    with pytest.raises(StencilOutOfDomain):
        chern_ricci_fd(m.flow_field(), np.array([0.1 + 5e-4j, 0.0j]), 0.0, h=1e-3)


def test_non_positive_determinant_raises():
    field = MetricField(lambda p, t: np.stack([np.diag([1.0, -1.0 - abs(q[0])]).astype(complex) for q in p]), 2)
    with pytest.raises(NonPositiveDeterminant):
        chern_ricci_fd(field, np.array([0.1j, 0.2 + 0j]))


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0.5, 3), st.floats(-1, 1), st.floats(-1, 1), st.sampled_from(FAMILIES[1:4]))
def test_ricci_output_is_hermitian(x, y, u, v, family):
    m = default_model(family)
    ric = chern_ricci_fd(m.flow_field(), np.array([x + 1j * y, u + 1j * v]), 0.0).matrix
    assert np.max(np.abs(ric - np.conj(ric.T))) <= 1e-12


# -- Gauduchon defect --------------------------------------------------------

def test_tricerri_is_gauduchon():
    m = default_model("inoue-sm")
    assert gauduchon_defect_fd(m.flow_field(), np.array([0.2 + 1j, 0.4 - 0.1j]), 0.0) <= 1e-6


@pytest.mark.parametrize("family", ["inoue-splus", "inoue-splus-m1"])
def test_shear_inoue_metric_is_gauduchon_on_samples(family):
    m = default_model(family)
    pts = validation_points(m, 20, seed=1)
    assert np.max(gauduchon_defect_fd(m.flow_field(), pts, 0.0)) <= 1e-6


@pytest.mark.parametrize("family", FAMILIES)
def test_gauduchon_preserved_along_flow(family):
    m = default_model(family)
    pts = validation_points(m, 20, seed=4)
    T = m.max_existence_time()
    for t in (0.0, 0.1 if np.isfinite(T) else 5.0, 0.4 if np.isfinite(T) else 50.0):
        assert np.max(gauduchon_defect_fd(m.flow_field(), pts, t)) <= 1e-5


def _perturbed_field(bump):
    def ev(p, t):
        g = np.zeros((len(p), 2, 2), complex)
        g[:, 0, 0] = 1 + bump(p[:, 0], p[:, 1])
        g[:, 1, 1] = 1
        return g
    return MetricField(ev, 2)


def test_non_gauduchon_perturbation_detected():
    # d_w dbar_w of 0.1 |w|^2 in the zz slot gives a defect of exactly 0.1
    z, w = sp.symbols("z w")
    zb, wb = sp.symbols("zb wb")
    coeff = sp.diff(sp.Rational(1, 10) * w * wb, w, wb)
    field = _perturbed_field(lambda z, w: 0.1 * np.abs(w) ** 2)
    d = gauduchon_defect_fd(field, np.array([0.3 + 0.2j, 0.5 - 0.1j]))
    assert d == pytest.approx(float(coeff), abs=1e-6)
    assert d > 1e-3


def test_pluriharmonic_perturbation_is_not_detected():
    # Re(z conj(w)^2) is pluriharmonic in w, so this bump leaves d dbar omega = 0
    field = _perturbed_field(lambda z, w: 0.1 * np.real(z * np.conj(w) ** 2))
    assert gauduchon_defect_fd(field, np.array([0.3 + 0.2j, 0.5 - 0.1j])) <= 1e-6
