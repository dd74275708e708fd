"""Nonlinear solver behavior."""

import numpy as np
import pytest

from cbf2d.forms import Assembler, ProblemData
from cbf2d.mesh import build_edges, generate_quasi_uniform_square
from cbf2d.solver import SolverConfig, SolverError, solve_cbf, solve_linear
from cbf2d.spaces import build_spaces


def _zero(pts):
    return np.zeros(np.shape(pts))


def _assembler(n=3, k=0, f=None, u_d=None):
    mesh = generate_quasi_uniform_square(n)
    topo = build_edges(mesh)
    spaces = build_spaces(mesh, topo, k)
    data = ProblemData(nu=1.0, alpha=1.0, forch=10.0, p_exp=3.0,
                       f=f or _zero, u_d=u_d or _zero)
    return mesh, Assembler(mesh, topo, spaces, data)


def test_zero_data_gives_zero_solution():
    mesh, asm = _assembler()
    solution, log = solve_cbf(asm)
    assert np.max(np.abs(solution.coeffs)) < 1e-12
    assert log.num_iterations <= 2


def test_newton_converges_quickly_on_smooth_data():
    def f(pts):
        x = pts[..., 0]
        y = pts[..., 1]
        return np.stack([np.sin(np.pi * x), np.cos(np.pi * y)], axis=-1)

    mesh, asm = _assembler(4, 0, f=f)
    solution, log = solve_cbf(asm, SolverConfig(tol=1e-10))
    assert log.num_iterations <= 8
    assert log.increments[-1] <= 1e-10
    # superlinear tail: the last increment is far below the previous one
    if len(log.increments) >= 2 and log.increments[-2] > 1e-14:
        assert log.increments[-1] < 0.5 * log.increments[-2]


def test_picard_strategy_converges():
    def f(pts):
        return 0.1 * np.ones(np.shape(pts))

    mesh, asm = _assembler(3, 0, f=f)
    cfg = SolverConfig(strategy="picard", max_iter=60)
    solution, log = solve_cbf(asm, cfg)
    assert log.strategy == "picard"
    assert log.increments[-1] <= cfg.tol


def test_newton_and_picard_agree():
    def f(pts):
        x = pts[..., 0]
        return np.stack([0.3 * x, -0.2 * x], axis=-1)

    mesh, asm = _assembler(3, 0, f=f)
    s1, _ = solve_cbf(asm, SolverConfig(tol=1e-12))
    s2, _ = solve_cbf(asm, SolverConfig(tol=1e-12, strategy="picard",
                                        max_iter=80))
    scale = max(1.0, np.max(np.abs(s1.coeffs)))
    assert np.max(np.abs(s1.coeffs - s2.coeffs)) / scale < 1e-9


def test_solution_independent_of_initial_guess():
    def f(pts):
        return 0.2 * np.ones(np.shape(pts))

    mesh, asm = _assembler(3, 0, f=f)
    s1, _ = solve_cbf(asm, SolverConfig(tol=1e-12))
    rng = np.random.default_rng(11)
    s2, _ = solve_cbf(asm, SolverConfig(tol=1e-12),
                      initial=0.1 * rng.standard_normal(asm.n_total))
    scale = max(1.0, np.max(np.abs(s1.coeffs)))
    assert np.max(np.abs(s1.coeffs - s2.coeffs)) / scale < 1e-9


@pytest.mark.filterwarnings("ignore::scipy.sparse.linalg.MatrixRankWarning")
def test_solve_linear_residual_guard():
    from scipy import sparse
    mat = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SolverError):
        solve_linear(mat, np.array([1.0, 1.0]))


def test_max_iter_exhaustion_raises():
    def f(pts):
        return np.ones(np.shape(pts))

    mesh, asm = _assembler(2, 0, f=f)
    cfg = SolverConfig(tol=1e-16, max_iter=1, picard_fallback=False)
    with pytest.raises(SolverError):
        solve_cbf(asm, cfg)
