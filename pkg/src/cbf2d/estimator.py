"""Residual-based a posteriori error indicators.

Two families are implemented, both built from the same first two volume
residuals of the discrete solution (sigma_h, u_h):

  R_grad = grad u_h - (1/nu) (sigma_h + u_h x u_h)^d        (on T)
  R_mom  = alpha u_h + F |u_h|^{p-2} u_h - div sigma_h - f  (on T)

``theta1`` adds the element curl of (1/nu)(sigma_h + u_h x u_h)^d, the
tangential-trace jumps of the same tensor across interior edges, and two
Dirichlet boundary mismatch terms.  ``theta2_hat`` is fully local: it keeps
only the volume residuals plus an H1 boundary mismatch per boundary edge.
"""

from dataclasses import dataclass

import numpy as np

from .forms import ProblemData, _guarded_power
from .mesh import TriangleMesh, EdgeTopology
from .quadrature import triangle_rule, edge_rule
from .spaces import DiscreteSolution, deviatoric, eval_sigma, eval_u


@dataclass
class IndicatorField:
    """Squared local indicators (nt,) plus the individual squared terms."""
    eta_sq: np.ndarray
    terms: dict
    kind: str

    @property
    def total(self):
        """Global estimator value, sqrt of the summed squared indicators."""
        return float(np.sqrt(self.eta_sq.sum()))


def tensor_curl_2d(grad_tensor):
    """Row-wise 2d curl of a tensor field from its gradient.

    ``grad_tensor[..., a, b, c]`` holds the derivative d M_{ab} / d x_c;
    the result row a is d M_{a2}/d x_1 - d M_{a1}/d x_2.
    """
    return grad_tensor[..., :, 1, 0] - grad_tensor[..., :, 0, 1]


def _lagrange_edge_values(space, tris, lam):
    """Basis values/gradients at batched barycentric points (ne, nq, 3)."""
    lg = space._lambda_grads[tris]  # (ne, 3, 2)
    ne, nq = lam.shape[:2]
    if space.order == 1:
        val = lam
        grad = np.broadcast_to(lg[:, None, :, :], (ne, nq, 3, 2)).copy()
        return val, grad
    val = np.empty((ne, nq, 6))
    grad = np.empty((ne, nq, 6, 2))
    for i in range(3):
        ip = (i + 1) % 3
        val[..., i] = lam[..., i] * (2.0 * lam[..., i] - 1.0)
        val[..., 3 + i] = 4.0 * lam[..., i] * lam[..., ip]
        grad[..., i, :] = (4.0 * lam[..., i, None] - 1.0) * lg[:, None, i, :]
        grad[..., 3 + i, :] = 4.0 * (lam[..., ip, None] * lg[:, None, i, :]
                                     + lam[..., i, None] * lg[:, None, ip, :])
    return val, grad


def _edge_side_eval(solution, mesh, topo, eidx, side, tq):
    """(u_h, grad u_h, sigma_h) on edges ``eidx`` from triangle side 0/1.

    Points run lo -> hi along each edge regardless of the side's local
    orientation.
    """
    spaces = solution.spaces
    tris = topo.edge_to_tri[eidx, side]
    # local edge index of e within its side triangle
    loc = np.argmax(topo.tri_edges[tris] == eidx[:, None], axis=1)
    aligned = mesh.triangles[tris, loc] == topo.edges[eidx, 0]
    s = np.where(aligned[:, None], tq[None, :], 1.0 - tq[None, :])
    lam = np.zeros((len(eidx), len(tq), 3))
    rows = np.arange(len(eidx))
    lam[rows, :, loc] = 1.0 - s
    lam[rows, :, (loc + 1) % 3] = s

    val, grad = _lagrange_edge_values(spaces.u, tris, lam)
    cd = spaces.u.cell_dofs[tris]
    cvec = np.stack([solution.u_coeffs[2 * cd],
                     solution.u_coeffs[2 * cd + 1]], axis=1)
    uval = np.einsum("tcm,tqm->tqc", cvec, val)
    ugrad = np.einsum("tcm,tqmd->tqcd", cvec, grad)

    lo = mesh.vertices[topo.edges[eidx, 0]]
    hi = mesh.vertices[topo.edges[eidx, 1]]
    pts = lo[:, None, :] + tq[None, :, None] * (hi - lo)[:, None, :]
    sig, _ = eval_sigma(spaces, solution.sigma_coeffs, tri_ids=tris,
                        phys_pts=pts)
    return uval, ugrad, sig, pts, tris


def _boundary_dirichlet_edges(topo, data):
    bidx = topo.boundary_edges()
    if data.traction:
        keep = np.array([int(topo.labels[e]) not in data.traction
                         for e in bidx], dtype=bool)
        bidx = bidx[keep]
    return bidx


def compute_indicators(solution: DiscreteSolution, mesh: TriangleMesh,
                       topo: EdgeTopology, data: ProblemData,
                       kind: str = "theta1", quad_degree=None):
    """Per-triangle squared error indicators of the requested kind."""
    if kind not in ("theta1", "theta2hat"):
        raise ValueError(f"unknown indicator kind {kind!r}")
    spaces = solution.spaces
    k = spaces.k
    deg = quad_degree or (2 * k + 6)
    rule = triangle_rule(deg)
    erule = edge_rule(deg)
    nt = mesh.num_triangles
    nu, p = data.nu, data.p_exp
    alpha_T, F_T = data.per_triangle(mesh)
    wdet = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    pts = spaces.sigma._ref_to_phys(rule.points)

    sig, dsig, gsig = eval_sigma(spaces, solution.sigma_coeffs, rule.points,
                                 with_grad=True)
    uval, ugrad = eval_u(spaces, solution.u_coeffs, rule.points)
    uu = np.einsum("tqa,tqb->tqab", uval, uval)
    dev_total = deviatoric(sig + uu) / nu

    terms = {}
    # gradient consistency residual
    rgrad = ugrad - dev_total
    terms["grad"] = np.sum(wdet[..., None, None] * rgrad ** 2, axis=(1, 2, 3))

    # momentum residual
    fvals = np.asarray(data.f(pts), dtype=float)
    mag = np.linalg.norm(uval, axis=-1)
    wp2 = _guarded_power(mag, p - 2.0)
    rmom = alpha_T[:, None, None] * uval \
        + (F_T[:, None] * wp2)[..., None] * uval - dsig - fvals
    terms["momentum"] = np.sum(wdet[..., None] * rmom ** 2, axis=(1, 2))

    eta = terms["grad"] + terms["momentum"]
    tq = erule.points
    wq = erule.weights

    if kind == "theta1":
        # element curl of the recovered gradient (piecewise polynomial)
        guu = np.einsum("tqac,tqb->tqabc", ugrad, uval) \
            + np.einsum("tqa,tqbc->tqabc", uval, ugrad)
        gtot = gsig + guu
        trg = gtot[..., 0, 0, :] + gtot[..., 1, 1, :]
        gdev = gtot.copy()
        gdev[..., 0, 0, :] -= 0.5 * trg
        gdev[..., 1, 1, :] -= 0.5 * trg
        curl = tensor_curl_2d(gdev / nu)
        hT2 = mesh.diameters() ** 2
        terms["curl"] = hT2 * np.sum(wdet[..., None] * curl ** 2, axis=(1, 2))
        eta = eta + terms["curl"]

        # tangential jumps across interior edges, halved per incident side
        iidx = topo.interior_edges()
        jump_term = np.zeros(nt)
        if len(iidx):
            u0, _, s0, _, t0 = _edge_side_eval(solution, mesh, topo,
                                               iidx, 0, tq)
            u1, _, s1, _, t1 = _edge_side_eval(solution, mesh, topo,
                                               iidx, 1, tq)
            m0 = deviatoric(s0 + np.einsum("eqa,eqb->eqab", u0, u0)) / nu
            m1 = deviatoric(s1 + np.einsum("eqa,eqb->eqab", u1, u1)) / nu
            tan = topo.tangents[iidx]
            jump = np.einsum("eqab,eb->eqa", m0 - m1, tan)
            wlen = topo.lengths[iidx, None] * wq[None, :]
            vals = topo.lengths[iidx] * np.sum(
                wlen * np.sum(jump ** 2, axis=-1), axis=1)
            np.add.at(jump_term, t0, 0.5 * vals)
            np.add.at(jump_term, t1, 0.5 * vals)
        terms["jump"] = jump_term
        eta = eta + jump_term

    # boundary mismatch terms (Dirichlet parts only)
    bidx = _boundary_dirichlet_edges(topo, data)
    bterm = np.zeros(nt)
    if len(bidx) and data.u_d is not None:
        ub, gb, sb, bpts, btris = _edge_side_eval(solution, mesh, topo,
                                                  bidx, 0, tq)
        wlen = topo.lengths[bidx, None] * wq[None, :]
        ud = np.asarray(data.u_d(bpts), dtype=float)
        diff2 = np.sum((ud - ub) ** 2, axis=-1)
        vals = np.sum(wlen * diff2, axis=1)          # L2 mismatch, unweighted
        if kind == "theta1":
            mb = deviatoric(sb + np.einsum("eqa,eqb->eqab", ub, ub)) / nu
            gde = np.asarray(data.grad_u_d(bpts), dtype=float)
            tan = topo.tangents[bidx]
            tt = np.einsum("eqab,eb->eqa", gde - mb, tan)
            vals = vals + topo.lengths[bidx] * np.sum(
                wlen * np.sum(tt ** 2, axis=-1), axis=1)
        else:
            # derivative part of the H1 edge norm; the full gradient
            # mismatch bounds the tangential derivative from above, so
            # reliability is kept
            gde = np.asarray(data.grad_u_d(bpts), dtype=float)
            vals = vals + np.sum(wlen * np.sum((gde - gb) ** 2,
                                               axis=(-2, -1)), axis=1)
        np.add.at(bterm, btris, vals)
    terms["boundary"] = bterm
    eta = eta + bterm

    return IndicatorField(eta_sq=eta, terms=terms, kind=kind)


def effectivity(total_error, indicators: IndicatorField):
    """Ratio of the true combined error to the global estimator."""
    return float(total_error) / indicators.total
