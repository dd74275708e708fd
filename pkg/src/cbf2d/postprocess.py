"""Recovery of pressure, velocity gradient, vorticity and shear stress.

All fields are algebraic functions of (sigma_h, u_h) evaluated pointwise:

  l_h       = -(1 / (2 |Omega|)) int |u_h|^2
  p_h       = -(1/2) tr(sigma_h + u_h x u_h) - l_h
  G_h       = (1/nu) (sigma_h + u_h x u_h)^d
  omega_h   = (1 / 2 nu) (sigma_h - sigma_h^T)
  stress_h  = (sigma_h + u_h x u_h)^d + sigma_h^T + u_h x u_h + l_h I
"""

from dataclasses import dataclass

import numpy as np

from .quadrature import triangle_rule
from .spaces import DiscreteSolution, eval_sigma, eval_u, deviatoric


@dataclass
class RecoveredFields:
    """Pointwise recovered fields at the quadrature points used."""
    ref_points: np.ndarray     # (nq, 2) reference coordinates
    phys_points: np.ndarray    # (nt, nq, 2)
    weights: np.ndarray        # (nt, nq) quadrature weights times jacobians
    u: np.ndarray              # (nt, nq, 2)
    grad_u: np.ndarray         # (nt, nq, 2, 2) discrete velocity gradient
    pressure: np.ndarray       # (nt, nq)
    velocity_gradient: np.ndarray  # (nt, nq, 2, 2) recovered from sigma_h
    vorticity: np.ndarray      # (nt, nq) scalar in 2d
    shear_stress: np.ndarray   # (nt, nq, 2, 2)
    mean_shift: float          # l_h


def trace_shift(solution: DiscreteSolution, mesh, degree=None):
    """l_h = -(1/(2|Omega|)) int |u_h|^2 over the whole domain."""
    k = solution.spaces.k
    rule = triangle_rule(degree or (2 * k + 4))
    wdet = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    uval, _ = eval_u(solution.spaces, solution.u_coeffs, rule.points)
    omega = mesh.areas().sum()
    return -0.5 * np.sum(wdet * np.sum(uval ** 2, axis=-1)) / omega


def recover_fields(solution: DiscreteSolution, mesh, nu, degree=None):
    """Evaluate all recovered fields at (elevated) quadrature points."""
    k = solution.spaces.k
    rule = triangle_rule(degree or (2 * k + 4))
    spaces = solution.spaces
    wdet = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    pts = spaces.sigma._ref_to_phys(rule.points)
    sig, _ = eval_sigma(spaces, solution.sigma_coeffs, rule.points)
    uval, ugrad = eval_u(spaces, solution.u_coeffs, rule.points)

    uu = np.einsum("tqa,tqb->tqab", uval, uval)
    total = sig + uu
    tr = total[..., 0, 0] + total[..., 1, 1]
    omega = mesh.areas().sum()
    lh = -0.5 * np.sum(wdet * np.sum(uval ** 2, axis=-1)) / omega

    pressure = -0.5 * tr - lh
    grad_rec = deviatoric(total) / nu
    vort = (sig[..., 1, 0] - sig[..., 0, 1]) / (2.0 * nu)
    eye = np.eye(2)
    sig_t = np.swapaxes(sig, -1, -2)
    stress = deviatoric(total) + sig_t + uu + lh * eye

    return RecoveredFields(ref_points=rule.points, phys_points=pts,
                           weights=wdet, u=uval, grad_u=ugrad,
                           pressure=pressure, velocity_gradient=grad_rec,
                           vorticity=vort, shear_stress=stress,
                           mean_shift=lh)


def cellwise_means(fields: RecoveredFields):
    """Per-triangle averages of the recovered scalar fields (for plotting)."""
    w = fields.weights
    wsum = w.sum(axis=1)
    return {
        "pressure": np.sum(w * fields.pressure, axis=1) / wsum,
        "vorticity": np.sum(w * fields.vorticity, axis=1) / wsum,
        "speed": np.sum(w * np.linalg.norm(fields.u, axis=-1), axis=1) / wsum,
    }
