"""Conforming triangular meshes.

Triangles are stored counterclockwise with the convention that the
refinement edge (the edge split by newest-vertex bisection) is the local
edge 0, i.e. the edge between the first two vertices.  Local edge j of a
triangle (v0, v1, v2) joins vertices (v_j, v_{j+1 mod 3}).

Meshes are immutable after construction; :func:`refine` returns a new mesh.
"""

from dataclasses import dataclass, field

import numpy as np


class MeshError(Exception):
    """Structural problem with a mesh (non-conformity, bad orientation, ...)."""


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray          # (nv, 2) float
    triangles: np.ndarray         # (nt, 3) int, counterclockwise
    boundary_labels: dict         # sorted vertex pair -> integer label
    regions: np.ndarray = None    # (nt,) int region tags
    # local index of the newest-vertex edge; always 0 under our convention
    refinement_edge: np.ndarray = None

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if self.regions is None:
            object.__setattr__(self, "regions",
                               np.zeros(len(triangles), dtype=np.int64))
        else:
            object.__setattr__(self, "regions",
                               np.ascontiguousarray(self.regions, dtype=np.int64))
        if self.refinement_edge is None:
            object.__setattr__(self, "refinement_edge",
                               np.zeros(len(triangles), dtype=np.int64))
        for arr in (self.vertices, self.triangles, self.regions,
                    self.refinement_edge):
            arr.setflags(write=False)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def triangle_coords(self):
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def signed_areas(self):
        xy = self.triangle_coords()
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self):
        return self.signed_areas()

    def centroids(self):
        return self.triangle_coords().mean(axis=1)

    def edge_lengths(self):
        """Lengths of the three local edges per triangle, shape (nt, 3)."""
        xy = self.triangle_coords()
        out = np.empty((self.num_triangles, 3))
        for j in range(3):
            out[:, j] = np.linalg.norm(xy[:, (j + 1) % 3] - xy[:, j], axis=1)
        return out

    def diameters(self):
        return self.edge_lengths().max(axis=1)

    def validate(self):
        nt = self.num_triangles
        if nt == 0:
            raise MeshError("empty mesh")
        tris = self.triangles
        if tris.min() < 0 or tris.max() >= self.num_vertices:
            raise MeshError("triangle vertex index out of range")
        if np.any(self.signed_areas() <= 0.0):
            bad = int(np.argmin(self.signed_areas()))
            raise MeshError(f"triangle {bad} has non-positive area")
        counts = {}
        for t in range(nt):
            a, b, c = tris[t]
            for key in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
                counts[key] = counts.get(key, 0) + 1
        for key, cnt in counts.items():
            if cnt > 2:
                raise MeshError(f"edge {key} shared by {cnt} triangles")
        return True


@dataclass(frozen=True)
class EdgeTopology:
    edges: np.ndarray          # (ne, 2) vertex pairs, lower index first
    edge_to_tri: np.ndarray    # (ne, 2) incident triangles, -1 = none
    tri_edges: np.ndarray      # (nt, 3) global edge id of each local edge
    normals: np.ndarray        # (ne, 2) fixed unit normal n_e
    tangents: np.ndarray       # (ne, 2) unit tangent s_e = (-n2, n1)
    lengths: np.ndarray        # (ne,)
    labels: np.ndarray         # (ne,) boundary label, -1 for interior

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def is_boundary(self):
        return self.edge_to_tri[:, 1] < 0

    def interior_edges(self):
        return np.nonzero(~self.is_boundary)[0]

    def boundary_edges(self):
        return np.nonzero(self.is_boundary)[0]


def build_edges(mesh: TriangleMesh) -> EdgeTopology:
    """Extract the edge topology of a conforming mesh.

    For interior edges the stored normal points from the first incident
    triangle into the second.  Raises :class:`MeshError` on non-conforming
    input (an edge with more than two incident triangles).
    """
    tris = mesh.triangles
    nt = mesh.num_triangles
    # local edge j = (v_j, v_{j+1})
    pairs = np.stack([tris, np.roll(tris, -1, axis=1)], axis=2)  # (nt,3,2)
    flat = pairs.reshape(-1, 2)
    keys = np.sort(flat, axis=1)
    edges, inverse, counts = np.unique(
        keys, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        bad = edges[int(np.argmax(counts))]
        raise MeshError(f"edge {tuple(bad)} shared by more than two triangles")
    ne = edges.shape[0]
    tri_edges = inverse.reshape(nt, 3)

    vecs = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    lengths = np.linalg.norm(vecs, axis=1)
    if np.any(lengths <= 0):
        raise MeshError("degenerate (zero-length) edge")
    tangents = vecs / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    edge_to_tri = np.full((ne, 2), -1, dtype=np.int64)
    # deterministic incidence: first-come per triangle index order
    for t in range(nt):
        for j in range(3):
            e = tri_edges[t, j]
            if edge_to_tri[e, 0] < 0:
                edge_to_tri[e, 0] = t
            else:
                edge_to_tri[e, 1] = t
    # orient: normal points away from the first incident triangle
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    cents = mesh.centroids()
    first = edge_to_tri[:, 0]
    outward = np.einsum("ea,ea->e", normals, mids - cents[first]) > 0
    swap = ~outward & (edge_to_tri[:, 1] >= 0)
    edge_to_tri[swap] = edge_to_tri[swap][:, ::-1]
    # boundary edges keep their single triangle first; flip n to be outward
    bdry_flip = ~outward & (edge_to_tri[:, 1] < 0)
    normals[bdry_flip] *= -1.0
    tangents[bdry_flip] *= -1.0
    # re-check interior orientation after swaps
    first = edge_to_tri[:, 0]
    outward = np.einsum("ea,ea->e", normals, mids - cents[first]) > 0
    interior = edge_to_tri[:, 1] >= 0
    flip = interior & ~outward
    normals[flip] *= -1.0
    tangents[flip] *= -1.0

    labels = np.full(ne, -1, dtype=np.int64)
    for i in np.nonzero(edge_to_tri[:, 1] < 0)[0]:
        key = (int(edges[i, 0]), int(edges[i, 1]))
        labels[i] = mesh.boundary_labels.get(key, 1)
    return EdgeTopology(edges, edge_to_tri, tri_edges,
                        normals, tangents, lengths, labels)


def mesh_size(mesh: TriangleMesh) -> float:
    """Largest triangle diameter h = max_T h_T."""
    if mesh.num_triangles == 0:
        raise MeshError("empty mesh has no size")
    return float(mesh.diameters().max())


def refine(mesh: TriangleMesh, marked) -> TriangleMesh:
    """Newest-vertex bisection of the marked triangles with conformity closure.

    Returns a new conforming mesh in which every marked triangle has been
    bisected at least once.  Unmarked triangles are split only as needed to
    keep the mesh conforming.
    """
    marked = set(int(t) for t in marked)
    if not marked:
        return mesh
    nt = mesh.num_triangles
    if marked and (min(marked) < 0 or max(marked) >= nt):
        raise MeshError("marked triangle id out of range")
    tris = mesh.triangles

    tri_keys = [[_edge_key(tris[t, 0], tris[t, 1]),
                 _edge_key(tris[t, 1], tris[t, 2]),
                 _edge_key(tris[t, 2], tris[t, 0])] for t in range(nt)]
    split = set(tri_keys[t][0] for t in marked)
    # closure: a triangle with any split edge must split its refinement edge
    changed = True
    while changed:
        changed = False
        for t in range(nt):
            keys = tri_keys[t]
            if keys[0] not in split and (keys[1] in split or keys[2] in split):
                split.add(keys[0])
                changed = True

    verts = [mesh.vertices]
    midpoint = {}
    for key in sorted(split):
        midpoint[key] = mesh.num_vertices + len(midpoint)
        verts.append(0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]])[None])
    new_vertices = np.vstack(verts)

    new_tris = []
    new_regions = []

    def emit(a, b, c, region):
        key = _edge_key(a, b)
        if key in split:
            m = midpoint[key]
            emit(c, a, m, region)
            emit(b, c, m, region)
        else:
            new_tris.append((a, b, c))
            new_regions.append(region)

    for t in range(nt):
        a, b, c = (int(v) for v in tris[t])
        emit(a, b, c, int(mesh.regions[t]))

    new_labels = {}
    for key, label in mesh.boundary_labels.items():
        key = _edge_key(*key)
        if key in split:
            m = midpoint[key]
            new_labels[_edge_key(key[0], m)] = label
            new_labels[_edge_key(key[1], m)] = label
        else:
            new_labels[key] = label

    return TriangleMesh(new_vertices, np.array(new_tris, dtype=np.int64),
                        new_labels, np.array(new_regions, dtype=np.int64))


def uniform_refine(mesh: TriangleMesh, passes: int = 1) -> TriangleMesh:
    for _ in range(passes):
        mesh = refine(mesh, range(mesh.num_triangles))
    return mesh


def _grid_mesh(x, y, keep=None):
    """Structured triangulation of a rectangle grid.

    Each cell is split along its diagonal; the diagonal is the refinement
    edge of both triangles (it is the longest edge, which gives well-behaved
    newest-vertex bisection).  ``keep(cx, cy)`` filters cells by center.
    """
    nx, ny = len(x) - 1, len(y) - 1
    xx, yy = np.meshgrid(x, y, indexing="ij")
    grid_id = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    tris = []
    used_cell = np.zeros((nx, ny), dtype=bool)
    for i in range(nx):
        for j in range(ny):
            cx = 0.5 * (x[i] + x[i + 1])
            cy = 0.5 * (y[j] + y[j + 1])
            if keep is not None and not keep(cx, cy):
                continue
            used_cell[i, j] = True
            p00 = grid_id[i, j]
            p10 = grid_id[i + 1, j]
            p01 = grid_id[i, j + 1]
            p11 = grid_id[i + 1, j + 1]
            tris.append((p10, p01, p00))
            tris.append((p01, p10, p11))
    tris = np.array(tris, dtype=np.int64)
    # compress unused vertices
    used = np.unique(tris)
    remap = np.full(vertices.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[tris]


def _boundary_label_map(vertices, triangles, locate):
    """Label boundary edges (found by incidence count) via ``locate(mid)``."""
    counts = {}
    for a, b, c in triangles:
        for key in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            counts[key] = counts.get(key, 0) + 1
    labels = {}
    for key, cnt in counts.items():
        if cnt == 1:
            mid = 0.5 * (vertices[key[0]] + vertices[key[1]])
            labels[key] = locate(mid)
    return labels


def _side_locator(xmin, xmax, ymin, ymax, tol=1e-12):
    # 1=left, 2=bottom, 3=right, 4=top
    def locate(mid):
        if abs(mid[0] - xmin) < tol:
            return 1
        if abs(mid[1] - ymin) < tol:
            return 2
        if abs(mid[0] - xmax) < tol:
            return 3
        return 4
    return locate


def generate_square(n: int) -> TriangleMesh:
    """Uniform n x n triangulation of (0,1)^2 (2 n^2 triangles)."""
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    grid = np.linspace(0.0, 1.0, n + 1)
    vertices, tris = _grid_mesh(grid, grid)
    labels = _boundary_label_map(vertices, tris, _side_locator(0, 1, 0, 1))
    return TriangleMesh(vertices, tris, labels)


def generate_quasi_uniform_square(n: int, jitter: float = 0.12,
                                  seed: int = 3) -> TriangleMesh:
    """Quasi-uniform unstructured triangulation of (0,1)^2.

    Points are laid out in offset rows (near-equilateral spacing), interior
    points get a small deterministic jitter, and the connectivity comes
    from a Delaunay triangulation.  Target edge length is 1/n.
    """
    from scipy.spatial import Delaunay
    if n < 2:
        raise ValueError("subdivision count must be >= 2")
    rng = np.random.default_rng(seed + n)
    h = 1.0 / n
    rows = int(round(n / (np.sqrt(3.0) / 2.0)))
    ys = np.linspace(0.0, 1.0, rows + 1)
    pts = []
    jig = []
    for j, y in enumerate(ys):
        if j == 0 or j == rows:
            xs = np.linspace(0.0, 1.0, n + 1)
        else:
            off = 0.5 * h if j % 2 else 0.0
            xs = np.arange(0.0, 1.0 + 1e-9, h) + off
            xs = xs[(xs > 1e-9) & (xs < 1.0 - 1e-9)]
            xs = np.concatenate([[0.0], xs, [1.0]])
        for i, x in enumerate(xs):
            pts.append((x, y))
            jig.append(0 < j < rows and 0 < i < len(xs) - 1)
    pts = np.array(pts)
    jig = np.array(jig)
    pts[jig] += jitter * h * rng.uniform(-1.0, 1.0, size=(jig.sum(), 2))
    tris = Delaunay(pts).simplices.astype(np.int64)
    v = pts[tris]
    det = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) \
        - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    flip = det < 0.0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    labels = _boundary_label_map(pts, tris, _side_locator(0, 1, 0, 1))
    return TriangleMesh(pts, tris, labels)


def generate_lshape(n: int) -> TriangleMesh:
    """Uniform triangulation of the L-shape (-1,1)^2 minus (0,1)^2."""
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    grid = np.linspace(-1.0, 1.0, 2 * n + 1)
    vertices, tris = _grid_mesh(grid, grid,
                                keep=lambda cx, cy: not (cx > 0 and cy > 0))
    labels = _boundary_label_map(vertices, tris,
                                 lambda mid: 1)  # single label suffices
    return TriangleMesh(vertices, tris, labels)


def point_in_polygon(points, polygon):
    """Even-odd ray casting test; ``polygon`` is (np, 2), ``points`` (n, 2)."""
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = polygon[:, 0], polygon[:, 1]
    npol = len(polygon)
    j = npol - 1
    for i in range(npol):
        cond = (py[i] > y) != (py[j] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (px[j] - px[i]) * (y - py[i]) / (py[j] - py[i]) + px[i]
        inside ^= cond & (x < xint)
        j = i
    return inside


def load_fracture_segments(path=None):
    """Read the bundled fracture-network segment list.

    Each non-comment line is ``x1 y1 x2 y2 halfwidth``; a segment expands to
    a thin rectangle (the fracture strip) around the segment.
    """
    if path is None:
        from importlib.resources import files
        text = (files("cbf2d") / "data" / "fracture_segments.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    loops = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x1, y1, x2, y2, hw = (float(v) for v in line.split())
        p1 = np.array([x1, y1])
        p2 = np.array([x2, y2])
        t = p2 - p1
        t = t / np.linalg.norm(t)
        nvec = np.array([-t[1], t[0]]) * hw
        loops.append(np.array([p1 + nvec, p2 + nvec, p2 - nvec, p1 - nvec]))
    return loops


FRACTURE_REGION = 1
MATRIX_REGION = 0


def generate_fracture_domain(n: int = 32) -> TriangleMesh:
    """Square (-1,1)^2 with triangles inside the fracture network tagged.

    Region label 1 marks the fracture strips, 0 the porous matrix.
    Boundary labels: 1=left, 2=bottom, 3=right, 4=top.
    """
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    grid = np.linspace(-1.0, 1.0, n + 1)
    vertices, tris = _grid_mesh(grid, grid)
    labels = _boundary_label_map(vertices, tris, _side_locator(-1, 1, -1, 1))
    centroids = vertices[tris].mean(axis=1)
    regions = np.zeros(len(tris), dtype=np.int64)
    for loop in load_fracture_segments():
        regions[point_in_polygon(centroids, loop)] = FRACTURE_REGION
    return TriangleMesh(vertices, tris, labels, regions=regions)


def write_mesh(mesh: TriangleMesh, path):
    """Write the plain-text mesh format (0-based indices).

    Line 1: ``nv nt nbe``; then nv lines ``x y``; then nt lines
    ``i j k region``; then nbe lines ``i j label``.
    """
    bkeys = sorted(mesh.boundary_labels)
    lines = [f"{mesh.num_vertices} {mesh.num_triangles} {len(bkeys)}"]
    for x, y in mesh.vertices:
        lines.append("%.17g %.17g" % (x, y))
    for (a, b, c), r in zip(mesh.triangles, mesh.regions):
        lines.append(f"{int(a)} {int(b)} {int(c)} {int(r)}")
    for key in bkeys:
        lines.append(f"{key[0]} {key[1]} {mesh.boundary_labels[key]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> TriangleMesh:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    nv, nt, nbe = (int(v) for v in tokens[0].split())
    vertices = np.array([[float(v) for v in tokens[1 + i].split()]
                         for i in range(nv)])
    body = [tokens[1 + nv + i].split() for i in range(nt)]
    triangles = np.array([[int(v) for v in row[:3]] for row in body])
    regions = np.array([int(row[3]) for row in body])
    labels = {}
    for i in range(nbe):
        a, b, lab = (int(v) for v in tokens[1 + nv + nt + i].split())
        labels[_edge_key(a, b)] = lab
    return TriangleMesh(vertices, triangles, labels, regions=regions)
