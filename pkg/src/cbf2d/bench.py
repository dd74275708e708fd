"""Benchmark problems, error norms and convergence studies.

Two manufactured cases with known exact solutions (a smooth flow on the
unit square and a high-pressure-gradient flow on an L-shaped domain) plus a
fracture-network flow driven by boundary tractions.  The source term of a
manufactured case is derived from the exact fields, so the discrete
residual can be cross-checked independently.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .forms import Assembler, ProblemData, _guarded_power
from .estimator import compute_indicators
from .mesh import (TriangleMesh, build_edges, generate_fracture_domain,
                   generate_lshape, generate_quasi_uniform_square,
                   generate_square, mesh_size, uniform_refine,
                   FRACTURE_REGION)
from .postprocess import recover_fields
from .quadrature import triangle_rule
from .solver import SolverConfig, solve_cbf
from .spaces import build_spaces, deviatoric, eval_sigma, eval_u


@dataclass
class ManufacturedCase:
    """A benchmark problem, with exact fields when they are known."""
    name: str
    data: ProblemData
    mesh_factory: Callable          # level (int >= 0) -> TriangleMesh
    u_exact: Optional[Callable] = None
    grad_u_exact: Optional[Callable] = None
    p_exact: Optional[Callable] = None
    domain_area: float = 1.0


def _square_case():
    nu, alpha, forch, p_exp = 1.0, 1.0, 10.0, 3.0

    def u(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([np.sin(np.pi * x1) * np.cos(np.pi * x2),
                         -np.cos(np.pi * x1) * np.sin(np.pi * x2)], axis=-1)

    def grad_u(x):
        x1, x2 = x[..., 0], x[..., 1]
        c1, s1 = np.cos(np.pi * x1), np.sin(np.pi * x1)
        c2, s2 = np.cos(np.pi * x2), np.sin(np.pi * x2)
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = np.pi * c1 * c2
        g[..., 0, 1] = -np.pi * s1 * s2
        g[..., 1, 0] = np.pi * s1 * s2
        g[..., 1, 1] = -np.pi * c1 * c2
        return g

    def p(x):
        return np.cos(np.pi * x[..., 0]) * np.sin(0.5 * np.pi * x[..., 1])

    def grad_p(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(
            [-np.pi * np.sin(np.pi * x1) * np.sin(0.5 * np.pi * x2),
             0.5 * np.pi * np.cos(np.pi * x1) * np.cos(0.5 * np.pi * x2)],
            axis=-1)

    def lap_u(x):
        return -2.0 * np.pi ** 2 * u(x)

    f = _manufactured_source(nu, alpha, forch, p_exp, u, grad_u, lap_u,
                             grad_p)
    data = ProblemData(nu=nu, alpha=alpha, forch=forch, p_exp=p_exp,
                       f=f, u_d=u, grad_u_d=grad_u)
    return ManufacturedCase(
        name="square", data=data,
        mesh_factory=lambda level: generate_quasi_uniform_square(
            int(round(8 * 2.0 ** (0.5 * level)))),
        u_exact=u, grad_u_exact=grad_u, p_exact=p, domain_area=1.0)


def _lshape_case():
    nu, alpha, forch, p_exp = 1.0, 1.0, 10.0, 3.5
    a = 0.09

    def u(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-np.pi * np.sin(np.pi * x1) * np.cos(np.pi * x2),
                         np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2)],
                        axis=-1)

    def grad_u(x):
        x1, x2 = x[..., 0], x[..., 1]
        c1, s1 = np.cos(np.pi * x1), np.sin(np.pi * x1)
        c2, s2 = np.cos(np.pi * x2), np.sin(np.pi * x2)
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = -np.pi ** 2 * c1 * c2
        g[..., 0, 1] = np.pi ** 2 * s1 * s2
        g[..., 1, 0] = -np.pi ** 2 * s1 * s2
        g[..., 1, 1] = np.pi ** 2 * c1 * c2
        return g

    def p_raw(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 10.0 * (1.0 - x1) / ((x1 - a) ** 2 + (x2 - a) ** 2)

    def grad_p(x):
        x1, x2 = x[..., 0], x[..., 1]
        r2 = (x1 - a) ** 2 + (x2 - a) ** 2
        gp1 = -10.0 / r2 - 20.0 * (1.0 - x1) * (x1 - a) / r2 ** 2
        gp2 = -20.0 * (1.0 - x1) * (x2 - a) / r2 ** 2
        return np.stack([gp1, gp2], axis=-1)

    def lap_u(x):
        return -2.0 * np.pi ** 2 * u(x)

    p0 = _mean_on_lshape(p_raw)

    def p(x):
        return p_raw(x) - p0

    f = _manufactured_source(nu, alpha, forch, p_exp, u, grad_u, lap_u,
                             grad_p)
    data = ProblemData(nu=nu, alpha=alpha, forch=forch, p_exp=p_exp,
                       f=f, u_d=u, grad_u_d=grad_u)
    return ManufacturedCase(
        name="lshape", data=data,
        mesh_factory=lambda level: generate_lshape(4 * 2 ** level),
        u_exact=u, grad_u_exact=grad_u, p_exact=p, domain_area=3.0)


def _fracture_case():
    def zero(x):
        return np.zeros(np.shape(x))

    def traction_left(pts):
        return np.stack([-0.5 * (pts[..., 1] - 1.0),
                         np.zeros(pts.shape[:-1])], axis=-1)

    def traction_bottom(pts):
        return np.stack([np.zeros(pts.shape[:-1]),
                         -0.5 * (pts[..., 0] - 1.0)], axis=-1)

    def traction_free(pts):
        return np.zeros(np.shape(pts))

    data = ProblemData(
        nu=1.0,
        alpha={FRACTURE_REGION: 1.0, 0: 1000.0},
        forch={FRACTURE_REGION: 10.0, 0: 1.0},
        p_exp=4.0, f=zero,
        traction={1: traction_left, 2: traction_bottom,
                  3: traction_free, 4: traction_free},
        momentum_weight=1.0)
    return ManufacturedCase(
        name="fracture", data=data,
        mesh_factory=lambda level: uniform_refine(
            generate_fracture_domain(32), level),
        domain_area=4.0)


def _mean_on_lshape(func, n=256):
    """Domain mean of a scalar via midpoint quadrature on a fine grid."""
    h = 2.0 / n
    c = np.linspace(-1.0 + 0.5 * h, 1.0 - 0.5 * h, n)
    cx, cy = np.meshgrid(c, c, indexing="ij")
    keep = ~((cx > 0) & (cy > 0))
    pts = np.stack([cx[keep], cy[keep]], axis=-1)
    return float(np.mean(func(pts)))


def _manufactured_source(nu, alpha, forch, p_exp, u, grad_u, lap_u, grad_p):
    """f = alpha u + F |u|^{p-2} u - div sigma for the exact fields."""
    def f(x):
        uv = u(x)
        mag = np.linalg.norm(uv, axis=-1, keepdims=True)
        conv = np.einsum("...ab,...b->...a", grad_u(x), uv)
        div_sigma = nu * lap_u(x) - conv - grad_p(x)
        return alpha * uv + forch * mag ** (p_exp - 2.0) * uv - div_sigma
    return f


def example_catalog():
    return {"ex1": _square_case, "ex2": _lshape_case,
            "fracture": _fracture_case}


def exact_pseudostress_shifted(case: ManufacturedCase):
    """sigma - (mean trace / 2) I, the representative with zero mean trace.

    For the manufactured cases the trace of nu grad u - u x u - p I is
    -|u|^2 - 2 p, and p has zero mean, so the shift is the exact counterpart
    of the discrete trace multiplier.
    """
    nu = case.data.nu
    shift = _case_mean_speed_shift(case)

    def sigma0(x):
        uv = case.u_exact(x)
        uu = np.einsum("...a,...b->...ab", uv, uv)
        g = case.grad_u_exact(x)
        pv = case.p_exact(x)
        eye = np.eye(2)
        return nu * g - uu - pv[..., None, None] * eye - shift * eye

    return sigma0


def _case_mean_speed_shift(case):
    """l = -(1/(2|Omega|)) int |u|^2 for the exact velocity."""
    if case.name == "square":
        # int of sin^2 cos^2 + cos^2 sin^2 over the unit square
        return -0.5 * 0.5
    if case.name == "lshape":
        def speed2(x):
            return np.sum(case.u_exact(x) ** 2, axis=-1)
        return -0.5 * _mean_on_lshape(speed2)
    raise ValueError(f"case {case.name} has no exact solution")


def compute_errors(solution, mesh, case: ManufacturedCase, degree=None):
    """Error norms of all primary and postprocessed fields.

    Pseudostress in H(div), velocity in H1, the recovered pressure,
    velocity gradient, vorticity and shear stress in L2.
    """
    spaces = solution.spaces
    data = case.data
    nu = data.nu
    k = spaces.k
    rule = triangle_rule(degree or (2 * k + 8))
    wdet = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    pts = spaces.sigma._ref_to_phys(rule.points)

    uh, guh = eval_u(spaces, solution.u_coeffs, rule.points)
    sig, dsig = eval_sigma(spaces, solution.sigma_coeffs, rule.points)

    ue = case.u_exact(pts)
    ge = case.grad_u_exact(pts)
    pe = case.p_exact(pts)
    sigma0 = exact_pseudostress_shifted(case)(pts)
    alpha_T, F_T = data.per_triangle(mesh)
    mag = np.linalg.norm(ue, axis=-1)
    wp2 = _guarded_power(mag, data.p_exp - 2.0)
    fe = np.asarray(data.f(pts), dtype=float)
    dsig_e = alpha_T[:, None, None] * ue \
        + (F_T[:, None] * wp2)[..., None] * ue - fe

    def l2sq(v):
        return np.sum(wdet * np.sum(v ** 2, axis=tuple(range(2, v.ndim))))

    e_sigma = np.sqrt(l2sq(sig - sigma0) + l2sq(dsig - dsig_e))
    e_u = np.sqrt(l2sq(uh - ue) + l2sq(guh - ge))

    # recovered fields against their exact counterparts
    uu = np.einsum("tqa,tqb->tqab", uh, uh)
    total = sig + uu
    omega_area = case.domain_area
    lh = -0.5 * np.sum(wdet * np.sum(uh ** 2, axis=-1)) / omega_area
    ph = -0.5 * (total[..., 0, 0] + total[..., 1, 1]) - lh
    Gh = deviatoric(total) / nu
    vort_h = (sig - np.swapaxes(sig, -1, -2)) / (2.0 * nu)
    stress_h = deviatoric(total) + np.swapaxes(sig, -1, -2) + uu \
        + lh * np.eye(2)

    vort_e = 0.5 * (ge - np.swapaxes(ge, -1, -2))
    stress_e = nu * (ge + np.swapaxes(ge, -1, -2)) \
        - pe[..., None, None] * np.eye(2)

    return {
        "e_sigma": float(e_sigma),
        "e_u": float(e_u),
        "e_total": float(np.hypot(e_sigma, e_u)),
        "e_p": float(np.sqrt(l2sq(ph - pe))),
        "e_G": float(np.sqrt(l2sq(Gh - ge))),
        "e_omega": float(np.sqrt(l2sq(vort_h - vort_e))),
        "e_stress": float(np.sqrt(l2sq(stress_h - stress_e))),
    }


def convergence_rate(err, err_prev, dof, dof_prev, dim=2):
    """Experimental rate from two consecutive (error, DOF) pairs."""
    return -dim * np.log(err / err_prev) / np.log(dof / dof_prev)


@dataclass
class StudyRecord:
    level: int
    h: float
    dofs: int
    iterations: int
    errors: dict
    estimates: dict
    effectivities: dict
    rates: dict = field(default_factory=dict)


def convergence_study(case: ManufacturedCase, k: int, levels: int,
                      solver_config: SolverConfig = None,
                      estimator_kinds=("theta1", "theta2hat"),
                      callback=None):
    """Solve the case on ``levels`` uniformly refined meshes.

    Returns a list of StudyRecord with errors, estimator values,
    effectivity indices and rates between consecutive levels.
    ``callback(record, mesh, solution)`` runs after each level.
    """
    solver_config = solver_config or SolverConfig()
    records = []
    for level in range(levels):
        mesh = case.mesh_factory(level)
        topo = build_edges(mesh)
        spaces = build_spaces(mesh, topo, k)
        asm = Assembler(mesh, topo, spaces, case.data)
        solution, log = solve_cbf(asm, solver_config)
        errors = compute_errors(solution, mesh, case)
        estimates, effs = {}, {}
        for kind in estimator_kinds:
            ind = compute_indicators(solution, mesh, topo, case.data,
                                     kind=kind)
            estimates[kind] = ind.total
            effs[kind] = errors["e_total"] / ind.total
        rec = StudyRecord(level=level, h=mesh_size(mesh),
                          dofs=spaces.total_dofs,
                          iterations=log.num_iterations,
                          errors=errors, estimates=estimates,
                          effectivities=effs)
        if records:
            prev = records[-1]
            for key, val in errors.items():
                rec.rates[key] = convergence_rate(
                    val, prev.errors[key], rec.dofs, prev.dofs)
        records.append(rec)
        if callback is not None:
            callback(rec, mesh, solution)
    return records
