"""Assembly of the augmented mixed system."""

import numpy as np
import pytest

from cbf2d.forms import (Assembler, ConfigurationError, ProblemData,
                         apply_essential, forchheimer_derivative)
from cbf2d.mesh import build_edges, generate_quasi_uniform_square, \
    generate_square
from cbf2d.spaces import build_spaces


def _zero(pts):
    return np.zeros(np.shape(pts))


def _setup(n=3, k=0, u_d=None, quasi=False, **data_kw):
    mesh = (generate_quasi_uniform_square(n) if quasi
            else generate_square(n))
    topo = build_edges(mesh)
    spaces = build_spaces(mesh, topo, k)
    kw = dict(nu=1.0, alpha=1.0, forch=10.0, p_exp=3.0, f=_zero,
              u_d=u_d or _zero)
    kw.update(data_kw)
    data = ProblemData(**kw)
    return mesh, topo, spaces, Assembler(mesh, topo, spaces, data)


def test_forchheimer_derivative_value():
    u = np.array([1.0, 2.0])
    jac = forchheimer_derivative(u, 4.0)
    # |u|^2 I + 2 u u^T at |u|^2 = 5
    assert np.allclose(jac, [[7.0, 4.0], [4.0, 13.0]], atol=1e-13)


@pytest.mark.parametrize("p_exp", [3.0, 3.5, 4.0])
def test_forchheimer_derivative_matches_finite_differences(p_exp):
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(2)
        jac = forchheimer_derivative(u, p_exp)
        eps = 1e-7
        for j in range(2):
            du = np.zeros(2)
            du[j] = eps
            up = u + du
            um = u - du
            fd = (np.linalg.norm(up) ** (p_exp - 2.0) * up
                  - np.linalg.norm(um) ** (p_exp - 2.0) * um) / (2 * eps)
            assert np.allclose(jac[:, j], fd, atol=1e-6)


def test_forchheimer_derivative_zero_guard():
    assert np.array_equal(forchheimer_derivative([0.0, 0.0], 3.0),
                          np.zeros((2, 2)))


def test_problem_data_validation():
    base = dict(nu=1.0, alpha=1.0, forch=1.0, p_exp=3.0, f=_zero)
    with pytest.raises(ConfigurationError):
        ProblemData(**{**base, "p_exp": 2.5})
    with pytest.raises(ConfigurationError):
        ProblemData(**{**base, "kappa1": 2.5})
    with pytest.raises(ConfigurationError):
        ProblemData(**{**base, "kappa2": -1.0})
    with pytest.raises(ConfigurationError):
        ProblemData(**{**base, "alpha": -2.0})
    data = ProblemData(**base)
    assert data.kappa1 == 1.0 and data.kappa2 == 0.5


def test_region_dependent_coefficients():
    mesh = generate_square(2)
    data = ProblemData(nu=1.0, alpha={0: 7.0}, forch={0: 3.0},
                       p_exp=3.0, f=_zero)
    alpha, forch = data.per_triangle(mesh)
    assert np.all(alpha == 7.0) and np.all(forch == 3.0)


@pytest.mark.parametrize("k", [0, 1])
def test_trace_row_integrates_trace(k):
    """Dotting the multiplier row with the identity tensor gives 2 |Omega|."""
    mesh, topo, spaces, asm = _setup(3, k, quasi=True)
    row = asm.trace_row()
    coeffs = np.zeros(asm.n_total)
    for r, e_r in ((0, np.array([1.0, 0.0])), (1, np.array([0.0, 1.0]))):
        srow = spaces.sigma.interpolate(
            lambda pts, e=e_r: np.broadcast_to(e, np.shape(pts)).copy())
        coeffs[2 * np.arange(spaces.sigma.num_dofs) + r] = srow
    area = mesh.areas().sum()
    assert row @ coeffs == pytest.approx(2.0 * area, rel=1e-12)


def test_rhs_constant_dirichlet_data():
    """For u_D = const the load reduces to pure boundary functionals."""
    c = np.array([0.4, -0.9])

    def u_d(pts):
        return np.broadcast_to(c, np.shape(pts)).copy()

    mesh, topo, spaces, asm = _setup(3, 0, u_d=u_d)
    rhs = asm.rhs_vector()
    # sigma block tested against the identity tensor:
    # <I n, c> over the closed boundary = int_Gamma c . n = 0
    coeffs = np.zeros(asm.n_total)
    for r in range(2):
        e_r = np.zeros(2)
        e_r[r] = 1.0
        srow = spaces.sigma.interpolate(
            lambda pts, e=e_r: np.broadcast_to(e, np.shape(pts)).copy())
        coeffs[2 * np.arange(spaces.sigma.num_dofs) + r] = srow
    assert coeffs @ rhs == pytest.approx(0.0, abs=1e-12)
    # v block tested against v = const d: kappa2 (c . d) |Gamma|
    d = np.array([1.0, 2.0])
    vco = np.zeros(asm.n_total)
    nvert = spaces.u.num_scalar_dofs
    vco[spaces.offset_u:spaces.offset_u + 2 * nvert] = np.tile(d, nvert)
    perim = 4.0
    assert vco @ rhs == pytest.approx(0.5 * np.dot(c, d) * perim, rel=1e-12)


@pytest.mark.parametrize("k", [0, 1])
def test_convective_jacobian_matches_finite_differences(k):
    mesh, topo, spaces, asm = _setup(2, k, quasi=True)
    rng = np.random.default_rng(4)
    x = 0.3 * rng.standard_normal(asm.n_total)
    jac = (asm.matrix(u_coeffs=x, newton=True) - asm.matrix()).toarray()
    eps = 1e-6
    for _ in range(4):
        dx = np.zeros(asm.n_total)
        # perturb a random velocity DOF (the residual depends only on u)
        j = spaces.offset_u + rng.integers(spaces.num_u_dofs)
        dx[j] = eps
        fd = (asm.nonlinear_residual_vector(x + dx)
              - asm.nonlinear_residual_vector(x - dx)) / (2 * eps)
        assert np.allclose(jac[:, j], fd, atol=2e-6)


def test_linear_operator_positive_on_random_vectors():
    """The augmented bilinear form is elliptic: x^T A x > 0."""
    mesh, topo, spaces, asm = _setup(3, 0, quasi=True)
    A = asm.matrix()
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.standard_normal(asm.n_total)
        x[spaces.offset_multiplier:] = 0.0
        # project out the one-dimensional multiplier coupling
        x -= asm.trace_row() * (asm.trace_row() @ x) \
            / (asm.trace_row() @ asm.trace_row())
        assert x @ (A @ x) > 0.0


def test_apply_essential_rows():
    mesh, topo, spaces, asm = _setup(2, 0)
    A = asm.matrix()
    rhs = np.zeros(asm.n_total)
    dofs = np.array([3, 17])
    vals = np.array([1.5, -2.5])
    A2, rhs2 = apply_essential(A, rhs, dofs, vals)
    for d, v in zip(dofs, vals):
        row = A2.getrow(d).toarray().ravel()
        expect = np.zeros_like(row)
        expect[d] = 1.0
        assert np.array_equal(row, expect)
        assert rhs2[d] == v
