"""Raviart-Thomas and Lagrange space properties."""

import numpy as np
import pytest

from cbf2d.mesh import (build_edges, generate_lshape,
                        generate_quasi_uniform_square, generate_square)
from cbf2d.quadrature import edge_rule, triangle_rule
from cbf2d.spaces import (DiscreteSolution, ScalarRT, VectorLagrange,
                          build_spaces, deviatoric, eval_sigma, eval_u)


def _meshes():
    return [generate_square(3), generate_quasi_uniform_square(5),
            generate_lshape(2)]


@pytest.mark.parametrize("k", [0, 1])
def test_rt_reproduces_polynomials(k):
    """The canonical interpolant is a projection onto the local space."""
    for mesh in _meshes():
        topo = build_edges(mesh)
        rt = ScalarRT(mesh, topo, k)

        def field(pts):
            # constants plus the radial bubble lie in every RT space;
            # full linears additionally lie in RT_1
            x, y = pts[..., 0], pts[..., 1]
            if k == 0:
                return np.stack([0.3 + 0.7 * x, -1.1 + 0.7 * y], axis=-1)
            return np.stack([0.3 + 0.7 * x - 0.2 * y,
                             -1.1 + 0.4 * y + 0.9 * x], axis=-1)

        coeffs = rt.interpolate(field)
        rule = triangle_rule(6)
        val, _, _ = rt.tabulate(rule.points)
        approx = np.einsum("tql,tqla->tqa",
                           coeffs[rt.cell_dofs][:, None, :], val)
        pts = rt._ref_to_phys(rule.points)
        assert np.max(np.abs(approx - field(pts))) < 1e-11


@pytest.mark.parametrize("k", [0, 1])
def test_rt_commuting_diagram(k):
    """Element moments of div(interpolant) match those of div(field)
    against every polynomial of degree k."""
    mesh = generate_quasi_uniform_square(4)
    topo = build_edges(mesh)
    rt = ScalarRT(mesh, topo, k)

    def field(pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([np.sin(1.3 * x) * np.cos(0.7 * y),
                         np.exp(0.4 * x - 0.3 * y)], axis=-1)

    def div_field(pts):
        x, y = pts[..., 0], pts[..., 1]
        return (1.3 * np.cos(1.3 * x) * np.cos(0.7 * y)
                - 0.3 * np.exp(0.4 * x - 0.3 * y))

    coeffs = rt.interpolate(field)
    rule = triangle_rule(10)
    _, div, _ = rt.tabulate(rule.points)
    div_h = np.einsum("tl,tql->tq", coeffs[rt.cell_dofs], div)
    pts = rt._ref_to_phys(rule.points)
    wdet = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    gap = div_h - div_field(pts)
    for a in range(k + 1):
        for b in range(k + 1 - a):
            q = pts[..., 0] ** a * pts[..., 1] ** b
            moments = np.sum(wdet * gap * q, axis=1)
            assert np.max(np.abs(moments)) < 1e-11


@pytest.mark.parametrize("k", [0, 1])
def test_rt_normal_trace_continuity(k):
    """Normal components agree across interior edges for any coefficients."""
    mesh = generate_quasi_uniform_square(4)
    topo = build_edges(mesh)
    rt = ScalarRT(mesh, topo, k)
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(rt.num_dofs)
    erule = edge_rule(6)
    interior = topo.interior_edges()
    lo = mesh.vertices[topo.edges[interior, 0]]
    hi = mesh.vertices[topo.edges[interior, 1]]
    pts = lo[:, None, :] + erule.points[None, :, None] * (hi - lo)[:, None, :]
    traces = []
    for side in range(2):
        tris = topo.edge_to_tri[interior, side]
        val, _, _ = rt.tabulate(None, tri_ids=tris, phys_pts=pts)
        fld = np.einsum("el,eqla->eqa", coeffs[rt.cell_dofs[tris]], val)
        traces.append(np.einsum("eqa,ea->eq", fld, topo.normals[interior]))
    assert np.max(np.abs(traces[0] - traces[1])) < 1e-12


@pytest.mark.parametrize("order", [1, 2])
def test_lagrange_partition_of_unity(order):
    mesh = generate_square(3)
    topo = build_edges(mesh)
    lag = VectorLagrange(mesh, topo, order)
    rule = triangle_rule(4)
    val, grad = lag.tabulate(rule.points)
    assert np.allclose(val.sum(axis=-1), 1.0, atol=1e-13)
    assert np.allclose(grad.sum(axis=2), 0.0, atol=1e-11)


def test_eval_u_matches_vertex_coefficients():
    mesh = generate_square(2)
    topo = build_edges(mesh)
    spaces = build_spaces(mesh, topo, 0)
    rng = np.random.default_rng(1)
    coeffs = rng.standard_normal(spaces.num_u_dofs)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    val, _ = eval_u(spaces, coeffs, corners)
    for t in range(mesh.num_triangles):
        for j in range(3):
            v = mesh.triangles[t, j]
            assert np.allclose(val[t, j], coeffs[2 * v:2 * v + 2],
                               atol=1e-13)


def test_deviatoric_is_trace_free():
    rng = np.random.default_rng(2)
    tau = rng.standard_normal((5, 4, 2, 2))
    dev = deviatoric(tau)
    assert np.allclose(dev[..., 0, 0] + dev[..., 1, 1], 0.0, atol=1e-14)
    assert np.allclose(deviatoric(dev), dev, atol=1e-14)


def test_discrete_solution_layout():
    mesh = generate_square(2)
    topo = build_edges(mesh)
    spaces = build_spaces(mesh, topo, 0)
    n = spaces.total_dofs + 1
    sol = DiscreteSolution(spaces, np.arange(n, dtype=float))
    assert len(sol.sigma_coeffs) == spaces.num_sigma_dofs
    assert len(sol.u_coeffs) == spaces.num_u_dofs
    assert sol.multiplier == float(n - 1)


def test_eval_sigma_consistent_with_tabulate():
    mesh = generate_quasi_uniform_square(3)
    topo = build_edges(mesh)
    spaces = build_spaces(mesh, topo, 0)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(spaces.num_sigma_dofs)
    rule = triangle_rule(4)
    sig, dsig = eval_sigma(spaces, coeffs, rule.points)
    assert sig.shape == (mesh.num_triangles, len(rule.weights), 2, 2)
    assert dsig.shape == (mesh.num_triangles, len(rule.weights), 2)
    assert np.all(np.isfinite(sig)) and np.all(np.isfinite(dsig))
