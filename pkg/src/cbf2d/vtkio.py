"""Legacy ASCII VTK output for triangle meshes and solution fields.

The writer emits an UNSTRUCTURED_GRID with the velocity as POINT_DATA
vectors and any cellwise quantities (pressure, vorticity, speed, error
indicators) as CELL_DATA scalars. The format is plain text so output is
reproducible byte for byte and readable by any standard VTK viewer.
"""

import numpy as np


def _fmt(x):
    return "%.9E" % float(x)


def write_vtk(path, mesh, point_vectors=None, cell_scalars=None,
              title="cbf2d output"):
    """Write a legacy ASCII VTK file.

    Parameters
    ----------
    path : str or Path
        Output file name.
    mesh : TriangleMesh
    point_vectors : dict name -> (nv, 2) array, optional
        Written as 3d vectors with zero third component.
    cell_scalars : dict name -> (nt,) array, optional
    """
    verts = mesh.vertices
    tris = mesh.triangles
    nv = verts.shape[0]
    nt = tris.shape[0]
    lines = []
    lines.append("# vtk DataFile Version 3.0")
    lines.append(title)
    lines.append("ASCII")
    lines.append("DATASET UNSTRUCTURED_GRID")
    lines.append(f"POINTS {nv} double")
    for p in verts:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(0.0)}")
    lines.append(f"CELLS {nt} {4 * nt}")
    for t in tris:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if point_vectors:
        lines.append(f"POINT_DATA {nv}")
        for name, vec in point_vectors.items():
            vec = np.asarray(vec)
            lines.append(f"VECTORS {name} double")
            for v in vec:
                lines.append(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(0.0)}")
    if cell_scalars:
        lines.append(f"CELL_DATA {nt}")
        for name, arr in cell_scalars.items():
            arr = np.asarray(arr)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            for a in arr:
                lines.append(_fmt(a))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Parse a file written by write_vtk; returns (points, cells, data).

    Intended for round-trip checks, not as a general VTK reader.
    """
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens)
    header = next(it)
    if not header.startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    next(it)  # title
    if next(it).strip() != "ASCII":
        raise ValueError("expected ASCII data")
    if next(it).split() != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise ValueError("expected UNSTRUCTURED_GRID")
    line = next(it).split()
    nv = int(line[1])
    points = np.array([[float(x) for x in next(it).split()]
                       for _ in range(nv)])
    line = next(it).split()
    nt = int(line[1])
    cells = np.array([[int(x) for x in next(it).split()[1:]]
                      for _ in range(nt)])
    line = next(it).split()
    if line[0] != "CELL_TYPES":
        raise ValueError("missing CELL_TYPES")
    for _ in range(nt):
        if next(it).strip() != "5":
            raise ValueError("expected triangle cells")
    data = {"point": {}, "cell": {}}
    section = None
    for line in it:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "POINT_DATA":
            section = ("point", nv)
        elif parts[0] == "CELL_DATA":
            section = ("cell", nt)
        elif parts[0] == "VECTORS":
            name = parts[1]
            n = section[1]
            vals = np.array([[float(x) for x in next(it).split()]
                             for _ in range(n)])
            data[section[0]][name] = vals[:, :2]
        elif parts[0] == "SCALARS":
            name = parts[1]
            next(it)  # LOOKUP_TABLE line
            n = section[1]
            vals = np.array([float(next(it)) for _ in range(n)])
            data[section[0]][name] = vals
    return points, cells, data


def solution_cell_data(solution, mesh, nu, indicators=None):
    """Assemble the standard CELL_DATA dictionary for a discrete solution."""
    from .postprocess import recover_fields, cellwise_means

    fields = recover_fields(solution, mesh, nu)
    cells = cellwise_means(fields)
    if indicators is not None:
        cells["indicator"] = np.sqrt(indicators.eta_sq)
    return cells


def vertex_velocity(solution, mesh):
    """Velocity values at mesh vertices, shape (nv, 2)."""
    nv = mesh.num_vertices
    return solution.u_coeffs[:2 * nv].reshape(nv, 2)
