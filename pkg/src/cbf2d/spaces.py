"""Raviart-Thomas and continuous Lagrange spaces on triangle meshes.

The pseudostress lives in a tensor space realized as two independent
scalar-row RT_k fields sharing one scalar DOF map; the velocity lives in a
continuous vector P_{k+1} space.  RT degrees of freedom are edge normal
moments against shifted Legendre polynomials in the global lo->hi edge
orientation (plus two interior moments for k=1), which makes shared-edge
DOFs identical from both sides and gives H(div) conformity without sign
bookkeeping.

Scalar RT bases are constructed per element in centroid-centered, diameter
-scaled coordinates by inverting the moment matrix of a monomial spanning
set; this is batched over all elements.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh, EdgeTopology
from .quadrature import triangle_rule, edge_rule


def deviatoric(tau):
    """tau - (1/2) tr(tau) I for arrays of 2x2 tensors (..., 2, 2)."""
    out = np.array(tau, dtype=float, copy=True)
    tr = 0.5 * (out[..., 0, 0] + out[..., 1, 1])
    out[..., 0, 0] -= tr
    out[..., 1, 1] -= tr
    return out


def _rt_span(k, xi):
    """Monomial spanning set of RT_k in local coordinates xi (..., 2).

    Returns values (..., nspan, 2), divergences (..., nspan) and gradients
    (..., nspan, 2, 2) with grad[..., i, m] = d(component i)/d(xi_m); the
    caller rescales derivatives by the local length scale.
    """
    x, y = xi[..., 0], xi[..., 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    if k == 0:
        val = np.stack([
            np.stack([one, zero], axis=-1),
            np.stack([zero, one], axis=-1),
            np.stack([x, y], axis=-1),
        ], axis=-2)
        div = np.stack([zero, zero, 2.0 * one], axis=-1)
        grad = np.zeros(val.shape + (2,))
        grad[..., 2, 0, 0] = 1.0
        grad[..., 2, 1, 1] = 1.0
        return val, div, grad
    if k == 1:
        val = np.stack([
            np.stack([one, zero], axis=-1),
            np.stack([x, zero], axis=-1),
            np.stack([y, zero], axis=-1),
            np.stack([zero, one], axis=-1),
            np.stack([zero, x], axis=-1),
            np.stack([zero, y], axis=-1),
            np.stack([x * x, x * y], axis=-1),
            np.stack([x * y, y * y], axis=-1),
        ], axis=-2)
        div = np.stack([zero, one, zero, zero, zero, one,
                        3.0 * x, 3.0 * y], axis=-1)
        grad = np.zeros(val.shape + (2,))
        grad[..., 1, 0, 0] = 1.0
        grad[..., 2, 0, 1] = 1.0
        grad[..., 4, 1, 0] = 1.0
        grad[..., 5, 1, 1] = 1.0
        grad[..., 6, 0, 0] = 2.0 * x
        grad[..., 6, 0, 1] = zero
        grad[..., 6, 1, 0] = y
        grad[..., 6, 1, 1] = x
        grad[..., 7, 0, 0] = y
        grad[..., 7, 0, 1] = x
        grad[..., 7, 1, 0] = zero
        grad[..., 7, 1, 1] = 2.0 * y
        return val, div, grad
    raise ValueError(f"unsupported Raviart-Thomas order {k}")


def _edge_legendre(k, t):
    """Shifted Legendre polynomials L_0..L_k on [0, 1]."""
    if k == 0:
        return np.ones((1,) + np.shape(t))
    return np.stack([np.ones_like(t), 2.0 * t - 1.0])


class ScalarRT:
    """Scalar-row Raviart-Thomas space of order k (k in {0, 1})."""

    def __init__(self, mesh: TriangleMesh, topo: EdgeTopology, k: int):
        if k not in (0, 1):
            raise ValueError(f"unsupported Raviart-Thomas order {k}")
        self.mesh = mesh
        self.topo = topo
        self.k = k
        self.nloc = 3 * (k + 1) + 2 * k
        nt = mesh.num_triangles
        ne = topo.num_edges
        self.num_dofs = ne * (k + 1) + nt * 2 * k
        # per-triangle local->global DOF map
        cell_dofs = np.empty((nt, self.nloc), dtype=np.int64)
        for j in range(3):
            for l in range(k + 1):
                cell_dofs[:, j * (k + 1) + l] = \
                    topo.tri_edges[:, j] * (k + 1) + l
        if k == 1:
            base = ne * (k + 1)
            cell_dofs[:, 6] = base + 2 * np.arange(nt)
            cell_dofs[:, 7] = base + 2 * np.arange(nt) + 1
        self.cell_dofs = cell_dofs
        self.centers = mesh.centroids()
        self.scales = mesh.diameters()
        self.coeffs = self._build_coeffs()

    def _build_coeffs(self):
        """Invert the per-element moment matrices of the monomial span."""
        mesh, topo, k = self.mesh, self.topo, self.k
        nt = mesh.num_triangles
        nloc = self.nloc
        M = np.empty((nt, nloc, nloc))
        erule = edge_rule(2 * k + 2)
        tq = erule.points
        leg = _edge_legendre(k, tq)  # (k+1, nqe)
        for j in range(3):
            eid = topo.tri_edges[:, j]
            lo = mesh.vertices[topo.edges[eid, 0]]
            hi = mesh.vertices[topo.edges[eid, 1]]
            # physical quadrature points along the canonical direction
            pts = lo[:, None, :] + tq[None, :, None] * (hi - lo)[:, None, :]
            xi = (pts - self.centers[:, None, :]) / self.scales[:, None, None]
            val, _, _ = _rt_span(k, xi)  # (nt, nqe, nspan, 2)
            flux = np.einsum("tqsa,ta->tqs", val, topo.normals[eid])
            for l in range(k + 1):
                M[:, j * (k + 1) + l, :] = topo.lengths[eid, None] * np.einsum(
                    "q,q,tqs->ts", erule.weights, leg[l], flux)
        if k == 1:
            trule = triangle_rule(2 * k + 2)
            pts = self._ref_to_phys(trule.points)
            xi = (pts - self.centers[:, None, :]) / self.scales[:, None, None]
            val, _, _ = _rt_span(k, xi)
            wdet = 2.0 * mesh.areas()[:, None] * trule.weights[None, :]
            for c in range(2):
                M[:, 6 + c, :] = np.einsum("tq,tqs->ts", wdet, val[..., c])
        return np.linalg.inv(M)  # coeffs[t, s, l]: basis_l = sum_s C[s,l] S_s

    def _ref_to_phys(self, ref_pts):
        """Map reference-triangle points to physical points, (nt, nq, 2)."""
        xy = self.mesh.triangle_coords()
        lam0 = 1.0 - ref_pts[:, 0] - ref_pts[:, 1]
        return (lam0[None, :, None] * xy[:, None, 0]
                + ref_pts[None, :, 0, None] * xy[:, None, 1]
                + ref_pts[None, :, 1, None] * xy[:, None, 2])

    def tabulate(self, ref_pts, tri_ids=None, phys_pts=None):
        """Basis values/divergences/gradients at quadrature points.

        Either reference points (used for every element, or for the subset
        ``tri_ids``) or explicit physical points per element may be given.
        Returns val (nt, nq, nloc, 2), div (nt, nq, nloc) and
        grad (nt, nq, nloc, 2, 2) with grad[..., i, m] = d basis_i / d x_m.
        """
        if tri_ids is None:
            tri_ids = slice(None)
        if phys_pts is None:
            phys_pts = self._ref_to_phys(ref_pts)[tri_ids]
        centers = self.centers[tri_ids]
        scales = self.scales[tri_ids]
        xi = (phys_pts - centers[:, None, :]) / scales[:, None, None]
        sval, sdiv, sgrad = _rt_span(self.k, xi)
        C = self.coeffs[tri_ids]
        val = np.einsum("tqsa,tsl->tqla", sval, C)
        div = np.einsum("tqs,tsl->tql", sdiv, C) / scales[:, None, None]
        grad = np.einsum("tqsam,tsl->tqlam", sgrad, C) \
            / scales[:, None, None, None, None]
        return val, div, grad

    def interpolate(self, field):
        """Coefficients of the canonical RT interpolant of a vector field.

        ``field(pts)`` maps (..., 2) points to (..., 2) values; moments are
        taken with elevated quadrature.
        """
        mesh, topo, k = self.mesh, self.topo, self.k
        coeffs = np.zeros(self.num_dofs)
        erule = edge_rule(8)
        tq = erule.points
        leg = _edge_legendre(k, tq)
        lo = mesh.vertices[topo.edges[:, 0]]
        hi = mesh.vertices[topo.edges[:, 1]]
        pts = lo[:, None, :] + tq[None, :, None] * (hi - lo)[:, None, :]
        flux = np.einsum("eqa,ea->eq", field(pts), topo.normals)
        for l in range(k + 1):
            coeffs[l::(k + 1)][:topo.num_edges] = topo.lengths * np.einsum(
                "q,q,eq->e", erule.weights, leg[l], flux)
        if k == 1:
            trule = triangle_rule(8)
            pts = self._ref_to_phys(trule.points)
            wdet = 2.0 * mesh.areas()[:, None] * trule.weights[None, :]
            vals = field(pts)
            base = topo.num_edges * 2
            nt = mesh.num_triangles
            for c in range(2):
                coeffs[base + c::2][:nt] = np.einsum(
                    "tq,tq->t", wdet, vals[..., c])
        return coeffs


class VectorLagrange:
    """Continuous vector Lagrange space of order 1 or 2.

    Scalar DOFs sit at vertices (order 1) plus edge midpoints (order 2);
    the vector DOF for scalar node n and component c has index 2n + c.
    """

    def __init__(self, mesh: TriangleMesh, topo: EdgeTopology, order: int):
        if order not in (1, 2):
            raise ValueError(f"unsupported Lagrange order {order}")
        self.mesh = mesh
        self.topo = topo
        self.order = order
        self.nloc_scalar = 3 if order == 1 else 6
        nv = mesh.num_vertices
        self.num_scalar_dofs = nv + (topo.num_edges if order == 2 else 0)
        self.num_dofs = 2 * self.num_scalar_dofs
        if order == 1:
            self.cell_dofs = mesh.triangles.copy()
        else:
            self.cell_dofs = np.hstack([mesh.triangles,
                                        nv + topo.tri_edges])
        # physical gradients of the barycentric coordinates, (nt, 3, 2)
        xy = mesh.triangle_coords()
        areas = mesh.areas()
        grads = np.empty((mesh.num_triangles, 3, 2))
        for i in range(3):
            a = xy[:, (i + 1) % 3]
            b = xy[:, (i + 2) % 3]
            grads[:, i, 0] = (a[:, 1] - b[:, 1]) / (2.0 * areas)
            grads[:, i, 1] = (b[:, 0] - a[:, 0]) / (2.0 * areas)
        self._lambda_grads = grads

    @staticmethod
    def _bary(ref_pts):
        lam = np.empty(np.shape(ref_pts)[:-1] + (3,))
        lam[..., 0] = 1.0 - ref_pts[..., 0] - ref_pts[..., 1]
        lam[..., 1] = ref_pts[..., 0]
        lam[..., 2] = ref_pts[..., 1]
        return lam

    def tabulate(self, ref_pts, tri_ids=None):
        """Scalar basis values (nq, nloc) and gradients (nt, nq, nloc, 2)."""
        if tri_ids is None:
            tri_ids = slice(None)
        lam = self._bary(np.asarray(ref_pts))
        lg = self._lambda_grads[tri_ids]
        if self.order == 1:
            val = lam
            grad = np.broadcast_to(lg[:, None, :, :],
                                   (lg.shape[0], lam.shape[0], 3, 2)).copy()
            return val, grad
        nq = lam.shape[0]
        val = np.empty((nq, 6))
        for i in range(3):
            val[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            val[:, 3 + i] = 4.0 * lam[:, i] * lam[:, (i + 1) % 3]
        grad = np.empty((lg.shape[0], nq, 6, 2))
        for i in range(3):
            grad[:, :, i, :] = (4.0 * lam[None, :, i, None] - 1.0) \
                * lg[:, None, i, :]
            grad[:, :, 3 + i, :] = 4.0 * (
                lam[None, :, (i + 1) % 3, None] * lg[:, None, i, :]
                + lam[None, :, i, None] * lg[:, None, (i + 1) % 3, :])
        return val, grad

    def edge_tabulate(self, local_edge: int, t):
        """Scalar basis values along local edge ``local_edge`` at params t.

        The parametrization runs from vertex ``local_edge`` to the next
        local vertex; values are element-independent (barycentric).
        """
        t = np.asarray(t)
        lam = np.zeros(t.shape + (3,))
        lam[..., local_edge] = 1.0 - t
        lam[..., (local_edge + 1) % 3] = t
        if self.order == 1:
            return lam
        val = np.empty(t.shape + (6,))
        for i in range(3):
            val[..., i] = lam[..., i] * (2.0 * lam[..., i] - 1.0)
            val[..., 3 + i] = 4.0 * lam[..., i] * lam[..., (i + 1) % 3]
        return val

    def interpolate(self, field):
        """Coefficients of the nodal interpolant of a vector field."""
        nodes = self.mesh.vertices
        if self.order == 2:
            mids = 0.5 * (self.mesh.vertices[self.topo.edges[:, 0]]
                          + self.mesh.vertices[self.topo.edges[:, 1]])
            nodes = np.vstack([nodes, mids])
        return np.asarray(field(nodes)).reshape(-1)


@dataclass
class FESpaces:
    """DOF layout of the coupled system: sigma block, u block, multiplier."""
    sigma: ScalarRT
    u: VectorLagrange
    k: int

    @property
    def num_sigma_dofs(self):
        return 2 * self.sigma.num_dofs

    @property
    def num_u_dofs(self):
        return self.u.num_dofs

    @property
    def offset_u(self):
        return self.num_sigma_dofs

    @property
    def offset_multiplier(self):
        return self.num_sigma_dofs + self.num_u_dofs

    @property
    def total_dofs(self):
        """Unknowns excluding the scalar multiplier."""
        return self.num_sigma_dofs + self.num_u_dofs

    def sigma_cell_dofs(self):
        """Tensor-sigma local->global map; local index 2*j + row."""
        sc = self.sigma.cell_dofs
        out = np.empty((sc.shape[0], 2 * sc.shape[1]), dtype=np.int64)
        out[:, 0::2] = 2 * sc
        out[:, 1::2] = 2 * sc + 1
        return out

    def u_cell_dofs(self):
        uc = self.u.cell_dofs
        out = np.empty((uc.shape[0], 2 * uc.shape[1]), dtype=np.int64)
        out[:, 0::2] = 2 * uc
        out[:, 1::2] = 2 * uc + 1
        return self.offset_u + out


def build_spaces(mesh: TriangleMesh, topo: EdgeTopology, k: int) -> FESpaces:
    return FESpaces(ScalarRT(mesh, topo, k),
                    VectorLagrange(mesh, topo, k + 1), k)


@dataclass
class DiscreteSolution:
    """Coefficient vector of a solve, split into (sigma, u, multiplier)."""
    spaces: FESpaces
    coeffs: np.ndarray

    @property
    def sigma_coeffs(self):
        return self.coeffs[:self.spaces.num_sigma_dofs]

    @property
    def u_coeffs(self):
        return self.coeffs[self.spaces.offset_u:
                           self.spaces.offset_u + self.spaces.num_u_dofs]

    @property
    def multiplier(self):
        if len(self.coeffs) > self.spaces.offset_multiplier:
            return float(self.coeffs[self.spaces.offset_multiplier])
        return 0.0


def eval_sigma(spaces, sigma_coeffs, ref_pts=None, tri_ids=None,
               phys_pts=None, with_grad=False):
    """sigma_h, div sigma_h (and optionally grad sigma_h) at points.

    Returns tensors (nt, nq, 2, 2), divergence vectors (nt, nq, 2) and,
    if requested, gradients (nt, nq, 2, 2, 2) indexed [row, col, deriv].
    """
    val, div, grad = spaces.sigma.tabulate(ref_pts, tri_ids=tri_ids,
                                           phys_pts=phys_pts)
    cd = spaces.sigma.cell_dofs if tri_ids is None \
        else spaces.sigma.cell_dofs[tri_ids]
    crow = np.stack([sigma_coeffs[2 * cd], sigma_coeffs[2 * cd + 1]], axis=1)
    sig = np.einsum("trl,tqla->tqra", crow, val)
    dsig = np.einsum("trl,tql->tqr", crow, div)
    if not with_grad:
        return sig, dsig
    gsig = np.einsum("trl,tqlam->tqram", crow, grad)
    return sig, dsig, gsig


def eval_u(spaces, u_coeffs, ref_pts, tri_ids=None):
    """u_h values (nt, nq, 2) and gradients (nt, nq, 2, 2) at ref points."""
    val, grad = spaces.u.tabulate(ref_pts, tri_ids=tri_ids)
    cd = spaces.u.cell_dofs if tri_ids is None \
        else spaces.u.cell_dofs[tri_ids]
    cvec = np.stack([u_coeffs[2 * cd], u_coeffs[2 * cd + 1]], axis=1)
    uval = np.einsum("tcm,qm->tqc", cvec, val)
    ugrad = np.einsum("tcm,tqmd->tqcd", cvec, grad)
    return uval, ugrad


def evaluate(solution: DiscreteSolution, x, tri: int,
             include_trace_shift=False, trace_shift=0.0):
    """Point evaluation inside triangle ``tri``.

    Returns (sigma 2x2, div sigma (2,), u (2,), grad u 2x2).  With
    ``include_trace_shift`` the constant ``trace_shift * I`` is added to
    sigma (the zero-mean correction folded back).
    """
    spaces = solution.spaces
    mesh = spaces.sigma.mesh
    xy = mesh.vertices[mesh.triangles[tri]]
    # barycentric coordinates of x
    T = np.column_stack([xy[1] - xy[0], xy[2] - xy[0]])
    ref = np.linalg.solve(T, np.asarray(x, dtype=float) - xy[0])
    if ref.min() < -1e-10 or ref.sum() > 1.0 + 1e-10:
        raise ValueError(f"point {x} lies outside triangle {tri}")
    ref_pts = ref[None, :]
    ids = np.array([tri])
    sig, dsig = eval_sigma(spaces, solution.sigma_coeffs, ref_pts, tri_ids=ids)
    uval, ugrad = eval_u(spaces, solution.u_coeffs, ref_pts, tri_ids=ids)
    sig = sig[0, 0]
    if include_trace_shift:
        sig = sig + trace_shift * np.eye(2)
    return sig, dsig[0, 0], uval[0, 0], ugrad[0, 0]


def rt_basis(mesh, topo, k, tri: int, x):
    """RT basis values and divergences of triangle ``tri`` at point(s) x."""
    space = ScalarRT(mesh, topo, k)
    pts = np.atleast_2d(np.asarray(x, dtype=float))[None, :, :]
    val, div, _ = space.tabulate(None, tri_ids=np.array([tri]), phys_pts=pts)
    return val[0], div[0]


def lagrange_basis(mesh, topo, order, tri: int, ref_pts):
    """Scalar Lagrange basis values and physical gradients at ref points."""
    space = VectorLagrange(mesh, topo, order)
    val, grad = space.tabulate(np.atleast_2d(ref_pts),
                               tri_ids=np.array([tri]))
    return val, grad[0]
