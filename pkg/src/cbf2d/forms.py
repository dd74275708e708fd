"""Assembly of the augmented mixed forms and their Newton linearization.

The coupled unknown is (sigma_h, u_h, multiplier) where sigma_h is the
row-wise RT_k pseudostress, u_h the continuous vector P_{k+1} velocity and
the scalar multiplier enforces the zero-mean-trace constraint on sigma_h.

Weak-form pieces (trial (zeta, z), test (tau, v)):

  A:    (1/nu) int zeta^d : tau^d + (1/alpha) int div zeta . div tau
        + kappa1 int {grad z - (1/nu) zeta^d} : grad v
        + kappa2 int_Gamma z . v

  B_w:  (1/nu) int (w x z)^d : {tau - kappa1 grad v}
        - (F/alpha) int |w|^{p-2} z . div tau

  F:    -(1/alpha) int f . div tau + <tau n, u_D>_Gamma
        + kappa2 int_Gamma u_D . v

All element loops are vectorized; triplets are accumulated in a fixed
canonical order so assembly is deterministic.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sparse

from .mesh import TriangleMesh, EdgeTopology
from .quadrature import triangle_rule, edge_rule
from .spaces import FESpaces

# below this velocity magnitude the Forchheimer derivative is taken as 0
_ZERO_VELOCITY = 1e-14


class ConfigurationError(ValueError):
    """Invalid physical or stabilization parameters."""


@dataclass
class ProblemData:
    """Physical data of one convective Brinkman-Forchheimer problem.

    ``alpha`` and ``forch`` may be plain floats or dicts mapping region
    labels to floats (piecewise-constant coefficients).  ``f``, ``u_d`` and
    ``grad_u_d`` are vectorized callables on point arrays (..., 2).
    ``traction`` maps boundary labels to prescribed (sigma n) callables;
    boundary parts with a traction entry get essential RT constraints and
    contribute no Dirichlet boundary terms.
    """
    nu: float
    alpha: object
    forch: object
    p_exp: float
    f: Callable
    u_d: Optional[Callable] = None
    grad_u_d: Optional[Callable] = None
    kappa1: float = None
    kappa2: float = None
    traction: dict = field(default_factory=dict)
    # weight of the consistent momentum-residual term used for pure-traction
    # runs (it replaces the lost boundary coercivity in v); 0 disables it.
    momentum_weight: float = 0.0

    def __post_init__(self):
        if self.kappa1 is None:
            self.kappa1 = self.nu
        if self.kappa2 is None:
            self.kappa2 = 0.5 * self.nu
        if self.nu <= 0:
            raise ConfigurationError("viscosity must be positive")
        if not 3.0 <= self.p_exp <= 4.0:
            raise ConfigurationError("inertial power must lie in [3, 4]")
        if not 0.0 < self.kappa1 < 2.0 * self.nu:
            raise ConfigurationError("kappa1 must lie in (0, 2 nu)")
        if self.kappa2 <= 0.0:
            raise ConfigurationError("kappa2 must be positive")
        for name in ("alpha", "forch"):
            val = getattr(self, name)
            vals = val.values() if isinstance(val, dict) else [val]
            if any(v <= 0 for v in vals):
                raise ConfigurationError(f"{name} must be positive")

    def per_triangle(self, mesh: TriangleMesh):
        """(alpha_T, F_T) arrays resolved through region labels."""
        def resolve(val):
            if isinstance(val, dict):
                out = np.empty(mesh.num_triangles)
                for label, v in val.items():
                    out[mesh.regions == label] = v
                return out
            return np.full(mesh.num_triangles, float(val))
        return resolve(self.alpha), resolve(self.forch)


@dataclass
class SparseSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    spaces: FESpaces


def forchheimer_derivative(u, p_exp):
    """Jacobian of u -> |u|^(p-2) u at a single point, with the 0 guard."""
    u = np.asarray(u, dtype=float)
    mag = np.linalg.norm(u)
    if mag < _ZERO_VELOCITY:
        return np.zeros((2, 2))
    return mag ** (p_exp - 2.0) * np.eye(2) \
        + (p_exp - 2.0) * mag ** (p_exp - 4.0) * np.outer(u, u)


def _guarded_power(mag, expo):
    """mag**expo with 0 where mag is (numerically) zero and expo < 0-safe."""
    out = np.zeros_like(mag)
    mask = mag >= _ZERO_VELOCITY
    out[mask] = mag[mask] ** expo
    return out


class Assembler:
    """Precomputes tabulations on one (mesh, spaces, data) triple.

    The linear operator A is assembled once; the u-dependent blocks (B_w,
    nonlinear residual, Newton correction) are reassembled per iterate.
    """

    def __init__(self, mesh: TriangleMesh, topo: EdgeTopology,
                 spaces: FESpaces, data: ProblemData, quad_degree=None):
        self.mesh = mesh
        self.topo = topo
        self.spaces = spaces
        self.data = data
        k = spaces.k
        self.quad_degree = quad_degree or (2 * k + 4)
        self.rule = triangle_rule(self.quad_degree)
        self.erule = edge_rule(self.quad_degree)

        self.alpha_T, self.F_T = data.per_triangle(mesh)
        areas = mesh.areas()
        self.wdet = 2.0 * areas[:, None] * self.rule.weights[None, :]
        self.phys_pts = spaces.sigma._ref_to_phys(self.rule.points)

        self.V, self.D, _ = spaces.sigma.tabulate(self.rule.points)
        self.L, self.G = spaces.u.tabulate(self.rule.points)

        self.sdofs = spaces.sigma_cell_dofs()   # (nt, 2*nR)
        self.udofs = spaces.u_cell_dofs()       # (nt, 2*nL)
        self.nR = spaces.sigma.nloc
        self.nL = spaces.u.nloc_scalar
        self.n_total = spaces.total_dofs + 1    # + multiplier

        self._setup_boundary()
        self._trace_row = self._build_trace_row()
        self._lin_coo = None

    # ------------------------------------------------------------------
    # boundary bookkeeping
    def _setup_boundary(self):
        topo = self.topo
        bidx = topo.boundary_edges()
        labels = topo.labels[bidx]
        traction_labels = set(self.data.traction)
        is_traction = np.array([lab in traction_labels for lab in labels]) \
            if len(bidx) else np.zeros(0, dtype=bool)
        self.bedges_dirichlet = bidx[~is_traction]
        self.bedges_traction = bidx[is_traction]

        # per boundary edge: owner triangle, local edge index
        owner = topo.edge_to_tri[bidx, 0]
        local = np.array([int(np.nonzero(topo.tri_edges[t] == e)[0][0])
                          for t, e in zip(owner, bidx)], dtype=np.int64) \
            if len(bidx) else np.zeros(0, dtype=np.int64)
        self._bowner = dict(zip(bidx.tolist(), owner.tolist()))
        self._blocal = dict(zip(bidx.tolist(), local.tolist()))

    def _edge_geometry(self, eidx):
        """Quadrature points/weights and outward normals along edges."""
        topo, mesh = self.topo, self.mesh
        tq = self.erule.points
        lo = mesh.vertices[topo.edges[eidx, 0]]
        hi = mesh.vertices[topo.edges[eidx, 1]]
        pts = lo[:, None, :] + tq[None, :, None] * (hi - lo)[:, None, :]
        wlen = topo.lengths[eidx, None] * self.erule.weights[None, :]
        return pts, wlen

    def _edge_u_tabulate(self, eidx):
        """Lagrange trace values on edges, aligned with lo->hi parametrization."""
        topo, mesh = self.topo, self.mesh
        tq = self.erule.points
        nL = self.nL
        out = np.empty((len(eidx), len(tq), nL))
        for i, e in enumerate(eidx):
            t = self._bowner[int(e)]
            j = self._blocal[int(e)]
            # local edge j runs tri[j] -> tri[j+1]; flip t if the canonical
            # (lo -> hi) direction disagrees
            a = mesh.triangles[t, j]
            tpar = tq if a == topo.edges[e, 0] else 1.0 - tq
            out[i] = self.spaces.u.edge_tabulate(j, tpar)
        return out

    def _edge_rt_tabulate(self, eidx, pts):
        owners = np.array([self._bowner[int(e)] for e in eidx], dtype=np.int64)
        val, div, _ = self.spaces.sigma.tabulate(None, tri_ids=owners,
                                                 phys_pts=pts)
        return owners, val

    # ------------------------------------------------------------------
    # triplet helpers
    @staticmethod
    def _scatter(local, rows_map, cols_map):
        """Local (nt, a, b) blocks to COO triplet arrays."""
        nt, a, b = local.shape
        rows = np.repeat(rows_map, b, axis=1).ravel()
        cols = np.tile(cols_map, (1, a)).ravel()
        return rows, cols, local.reshape(-1)

    def _coo(self, parts):
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        vals = np.concatenate([p[2] for p in parts])
        n = self.n_total
        return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))

    # ------------------------------------------------------------------
    # fixed linear operator
    def linear_operator_parts(self):
        """Triplet parts of A plus the multiplier coupling."""
        if self._lin_coo is not None:
            return self._lin_coo
        data = self.data
        nu, k1, k2 = data.nu, data.kappa1, data.kappa2
        V, D, G, wdet = self.V, self.D, self.G, self.wdet
        nR, nL = self.nR, self.nL
        nt = self.mesh.num_triangles
        parts = []

        # sigma-sigma block
        IVab = np.einsum("tq,tqja,tqkb->tjkab", wdet, V, V)
        IVV = IVab[..., 0, 0] + IVab[..., 1, 1]
        IDD = np.einsum("tq,t,tqj,tqk->tjk", wdet, 1.0 / self.alpha_T, D, D)
        Kss = np.zeros((nt, 2 * nR, 2 * nR))
        for r in range(2):
            for rp in range(2):
                # test (r, j), trial (rp, jp): -(1/2nu) int V_j[r] V_jp[rp]
                blk = -(0.5 / nu) * IVab[..., r, rp]
                if r == rp:
                    blk = blk + (1.0 / nu) * IVV + IDD
                Kss[:, r::2, rp::2] = blk
        parts.append(self._scatter(Kss, self.sdofs, self.sdofs))

        # v-test, sigma-trial block: -(k1/nu)[d_{c rp} int V.G - 1/2 V[rp] G[c]]
        IVG = np.einsum("tq,tqja,tqmb->tjmab", wdet, V, G)
        IVGdot = IVG[..., 0, 0] + IVG[..., 1, 1]
        Kvs = np.zeros((nt, 2 * nL, 2 * nR))
        for c in range(2):
            for rp in range(2):
                blk = (0.5 * k1 / nu) * IVG[..., rp, c].transpose(0, 2, 1)
                if c == rp:
                    blk = blk - (k1 / nu) * IVGdot.transpose(0, 2, 1)
                Kvs[:, c::2, rp::2] = blk
        parts.append(self._scatter(Kvs, self.udofs, self.sdofs))

        # v-test, z-trial volume block: k1 int grad z : grad v
        IGG = np.einsum("tq,tqma,tqna->tmn", wdet, G, G)
        Kvz = np.zeros((nt, 2 * nL, 2 * nL))
        for c in range(2):
            Kvz[:, c::2, c::2] = k1 * IGG
        parts.append(self._scatter(Kvz, self.udofs, self.udofs))

        # kappa2 boundary mass on Dirichlet edges
        bidx = self.bedges_dirichlet
        if len(bidx):
            pts, wlen = self._edge_geometry(bidx)
            Lb = self._edge_u_tabulate(bidx)
            Me = k2 * np.einsum("eq,eqm,eqn->emn", wlen, Lb, Lb)
            owners = np.array([self._bowner[int(e)] for e in bidx])
            ucd = self.udofs[owners]
            Kb = np.zeros((len(bidx), 2 * nL, 2 * nL))
            for c in range(2):
                Kb[:, c::2, c::2] = Me
            parts.append(self._scatter(Kb, ucd, ucd))

        # multiplier row/column (zero-mean trace constraint); with traction
        # data the normalization comes from the boundary instead, so the
        # multiplier is pinned to zero
        if self.data.traction:
            one = np.array([self.n_total - 1], dtype=np.int64)
            parts.append((one, one, np.ones(1)))
        else:
            r = self._trace_row
            nz = np.nonzero(r)[0]
            last = np.full(len(nz), self.n_total - 1, dtype=np.int64)
            parts.append((nz, last, r[nz]))      # column: + lambda * r
            parts.append((last, nz, r[nz]))      # row:    r . sigma = 0

        # momentum-residual augmentation (traction runs only)
        if self.data.momentum_weight > 0.0:
            parts.extend(self._momentum_linear_parts())

        self._lin_coo = parts
        return parts

    def _momentum_linear_parts(self):
        """Linear pieces of w3 * int (alpha z - div zeta) . v (per element)."""
        w3 = self.data.momentum_weight / self.alpha_T
        wdet3 = self.wdet * w3[:, None]
        L, G, D = self.L, self.G, self.D
        nt, nR, nL = self.mesh.num_triangles, self.nR, self.nL
        ILL = np.einsum("tq,qm,qn->tmn", wdet3 * self.alpha_T[:, None], L, L)
        IDL = np.einsum("tq,tqj,qm->tmj", wdet3, D, L)
        Kvz = np.zeros((nt, 2 * nL, 2 * nL))
        Kvs = np.zeros((nt, 2 * nL, 2 * nR))
        for c in range(2):
            Kvz[:, c::2, c::2] = ILL
            Kvs[:, c::2, c::2] = -IDL
        return [self._scatter(Kvz, self.udofs, self.udofs),
                self._scatter(Kvs, self.udofs, self.sdofs)]

    def _build_trace_row(self):
        """Dense row r with r . sigma_coeffs = int tr(sigma_h)."""
        r = np.zeros(self.n_total)
        itr = np.einsum("tq,tqja->tja", self.wdet, self.V)
        for row in range(2):
            np.add.at(r, self.sdofs[:, row::2], itr[..., row])
        return r

    def trace_row(self):
        return self._trace_row.copy()

    # ------------------------------------------------------------------
    # u-dependent blocks
    def _velocity_at_quads(self, u_coeffs_global):
        cvec = u_coeffs_global[self.udofs]  # (nt, 2nL)
        W = np.concatenate([
            np.einsum("qm,tm->tq", self.L, cvec[:, 0::2])[..., None],
            np.einsum("qm,tm->tq", self.L, cvec[:, 1::2])[..., None]], axis=2)
        return W

    def convective_parts(self, W, newton=False):
        """Triplets of B_w (picard) or of the Newton correction at u=W."""
        data = self.data
        nu, k1, p = data.nu, data.kappa1, data.p_exp
        V, D, L, G, wdet = self.V, self.D, self.L, self.G, self.wdet
        nt, nR, nL = self.mesh.num_triangles, self.nR, self.nL
        Fa = self.F_T / self.alpha_T
        mag = np.linalg.norm(W, axis=2)
        wp2 = _guarded_power(mag, p - 2.0)

        # int W_a L_m V_j[b]  and with G
        T1 = np.einsum("tq,tqa,qm,tqjb->tjmab", wdet, W, L, V)
        T3 = np.einsum("tq,tqa,qm,tqnb->tnmab", wdet, W, L, G)
        T2 = np.einsum("tq,t,tq,qm,tqj->tjm", wdet, Fa, wp2, L, D)

        Bsu = np.zeros((nt, 2 * nR, 2 * nL))
        Bvu = np.zeros((nt, 2 * nL, 2 * nL))
        if newton:
            TUV = T1[..., 0, 0] + T1[..., 1, 1]  # int (W.V_j) L_m
            TUG = T3[..., 0, 0] + T3[..., 1, 1]
            wp4c = (p - 2.0) * Fa[:, None] * _guarded_power(mag, p - 4.0)
            T4 = np.einsum("tq,tq,tqa,tqb,qm,tqj->tjmab",
                           wdet, wp4c, W, W, L, D)
        for r in range(2):
            for cp in range(2):
                if newton:
                    # derivative of (z x z)^d hits both slots of the product
                    blk = (1.0 / nu) * (T1[..., r, cp] - T1[..., cp, r]) \
                        - T4[..., r, cp]
                    if r == cp:
                        blk = blk + (1.0 / nu) * TUV - T2
                else:
                    blk = (1.0 / nu) * T1[..., r, cp] \
                        - (0.5 / nu) * T1[..., cp, r]
                    if r == cp:
                        blk = blk - T2
                Bsu[:, r::2, cp::2] = blk
        for c in range(2):
            for cp in range(2):
                if newton:
                    blk = -(k1 / nu) * (T3[..., c, cp] - T3[..., cp, c])
                    if c == cp:
                        blk = blk - (k1 / nu) * TUG
                else:
                    blk = -(k1 / nu) * (T3[..., c, cp] - 0.5 * T3[..., cp, c])
                Bvu[:, c::2, cp::2] = blk
        parts = [self._scatter(Bsu, self.sdofs, self.udofs),
                 self._scatter(Bvu, self.udofs, self.udofs)]
        if newton and self.data.momentum_weight > 0.0:
            parts.append(self._momentum_forch_part(W, mag))
        return parts

    def _momentum_forch_part(self, W, mag):
        """w3 * int F dForch(W) z . v  (Jacobian piece of the momentum term)."""
        p = self.data.p_exp
        w3 = self.data.momentum_weight / self.alpha_T
        wdet3 = self.wdet * (w3 * self.F_T)[:, None]
        wp2 = _guarded_power(mag, p - 2.0)
        wp4 = (p - 2.0) * _guarded_power(mag, p - 4.0)
        L = self.L
        nt, nL = self.mesh.num_triangles, self.nL
        Iso = np.einsum("tq,tq,qm,qn->tmn", wdet3, wp2, L, L)
        Dya = np.einsum("tq,tq,tqa,tqb,qm,qn->tmnab", wdet3, wp4, W, W, L, L)
        K = np.zeros((nt, 2 * nL, 2 * nL))
        for c in range(2):
            for cp in range(2):
                blk = Dya[..., c, cp]
                if c == cp:
                    blk = blk + Iso
                K[:, c::2, cp::2] = blk
        return self._scatter(K, self.udofs, self.udofs)

    def nonlinear_residual_vector(self, x):
        """Vector N with N . test = B_u((sigma,u),(tau,v)) at the iterate x."""
        data = self.data
        nu, k1, p = data.nu, data.kappa1, data.p_exp
        W = self._velocity_at_quads(x)
        mag = np.linalg.norm(W, axis=2)
        wp2 = _guarded_power(mag, p - 2.0)
        Fa = self.F_T / self.alpha_T
        V, D, G, wdet = self.V, self.D, self.G, self.wdet
        out = np.zeros(self.n_total)

        # tau rows: (1/nu)[W_r (W.V_j) - 1/2 |W|^2 V_j[r]] - (F/a) wp2 W_r D_j
        WV = np.einsum("tqa,tqja->tqj", W, V)
        mag2 = mag ** 2
        for r in range(2):
            loc = np.einsum("tq,tqj->tj", wdet,
                            (1.0 / nu) * (W[..., r, None] * WV
                                          - 0.5 * mag2[..., None] * V[..., r])
                            - (Fa[:, None] * wp2 * W[..., r])[..., None] * D)
            np.add.at(out, self.sdofs[:, r::2], loc)
        # v rows: -(k1/nu)[W_c (W.G_m) - 1/2 |W|^2 G_m[c]]
        WG = np.einsum("tqa,tqma->tqm", W, G)
        for c in range(2):
            loc = np.einsum("tq,tqm->tm", wdet,
                            -(k1 / nu) * (W[..., c, None] * WG
                                          - 0.5 * mag2[..., None] * G[..., c]))
            np.add.at(out, self.udofs[:, c::2], loc)
        if data.momentum_weight > 0.0:
            w3 = data.momentum_weight / self.alpha_T
            wdet3 = wdet * (w3 * self.F_T)[:, None]
            for c in range(2):
                loc = np.einsum("tq,tq,qm->tm", wdet3, wp2 * W[..., c], self.L)
                np.add.at(out, self.udofs[:, c::2], loc)
        return out

    # ------------------------------------------------------------------
    def rhs_vector(self):
        """The load functional F (volume source + Dirichlet boundary data)."""
        data = self.data
        out = np.zeros(self.n_total)
        fvals = np.asarray(data.f(self.phys_pts), dtype=float)
        for r in range(2):
            loc = -np.einsum("tq,t,tq,tqj->tj", self.wdet, 1.0 / self.alpha_T,
                             fvals[..., r], self.D)
            np.add.at(out, self.sdofs[:, r::2], loc)
        if data.momentum_weight > 0.0:
            w3 = data.momentum_weight / self.alpha_T
            for c in range(2):
                loc = np.einsum("tq,t,tq,qm->tm", self.wdet, w3,
                                fvals[..., c], self.L)
                np.add.at(out, self.udofs[:, c::2], loc)
        bidx = self.bedges_dirichlet
        if len(bidx) and data.u_d is not None:
            pts, wlen = self._edge_geometry(bidx)
            ud = np.asarray(data.u_d(pts), dtype=float)
            owners, Vb = self._edge_rt_tabulate(bidx, pts)
            # outward normals (boundary normals already point outward)
            nrm = self.topo.normals[bidx]
            flux = np.einsum("eqja,ea->eqj", Vb, nrm)
            for r in range(2):
                loc = np.einsum("eq,eq,eqj->ej", wlen, ud[..., r], flux)
                np.add.at(out, self.sdofs[owners][:, r::2], loc)
            Lb = self._edge_u_tabulate(bidx)
            for c in range(2):
                loc = data.kappa2 * np.einsum("eq,eq,eqm->em",
                                              wlen, ud[..., c], Lb)
                np.add.at(out, self.udofs[owners][:, c::2], loc)
        return out

    # ------------------------------------------------------------------
    def matrix(self, u_coeffs=None, newton=False):
        """Assembled sparse operator.

        Without velocity data this is the linear part A (plus multiplier).
        With ``u_coeffs`` the convective block B_w (or its Newton
        linearization) is added.
        """
        parts = list(self.linear_operator_parts())
        if u_coeffs is not None:
            W = self._velocity_at_quads(u_coeffs)
            parts.extend(self.convective_parts(W, newton=newton))
        return self._coo(parts).tocsr()

    def traction_dofs(self):
        """Essential RT DOFs on traction boundary parts and their values."""
        data, topo = self.data, self.topo
        dofs, values = [], []
        k = self.spaces.k
        erule = edge_rule(2 * k + 6)
        tq = erule.points
        from .spaces import _edge_legendre
        leg = _edge_legendre(k, tq)
        for e in self.bedges_traction:
            lab = int(topo.labels[e])
            g = data.traction[lab]
            lo = self.mesh.vertices[topo.edges[e, 0]]
            hi = self.mesh.vertices[topo.edges[e, 1]]
            pts = lo[None] + tq[:, None] * (hi - lo)[None]
            gv = np.asarray(g(pts), dtype=float)  # traction wrt outward n
            # stored n of a boundary edge is outward already
            for l in range(k + 1):
                scalar_dof = int(e) * (k + 1) + l
                mom = topo.lengths[e] * np.einsum(
                    "q,q,qa->a", erule.weights, leg[l], gv)
                for r in range(2):
                    dofs.append(2 * scalar_dof + r)
                    values.append(mom[r])
        return np.array(dofs, dtype=np.int64), np.array(values)


def apply_essential(matrix, rhs, dofs, values):
    """Impose x[dofs] = values by row replacement (LIL round trip)."""
    if len(dofs) == 0:
        return matrix.tocsr(), rhs
    m = matrix.tolil()
    for d, v in zip(dofs, values):
        m.rows[d] = [int(d)]
        m.data[d] = [1.0]
        rhs[d] = v
    return m.tocsr(), rhs
