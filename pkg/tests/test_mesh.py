"""Mesh generation, edge topology and newest-vertex bisection."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbf2d.mesh import (build_edges, generate_fracture_domain,
                        generate_lshape, generate_quasi_uniform_square,
                        generate_square, mesh_size, read_mesh, refine,
                        uniform_refine, write_mesh)


def total_area(mesh):
    return float(mesh.areas().sum())


def test_square_counts():
    n = 4
    mesh = generate_square(n)
    topo = build_edges(mesh)
    assert mesh.num_triangles == 2 * n * n
    assert mesh.num_vertices == (n + 1) ** 2
    assert topo.num_edges == 3 * n * n + 2 * n
    assert total_area(mesh) == pytest.approx(1.0, rel=1e-13)
    mesh.validate()


def test_square_boundary_labels():
    mesh = generate_square(3)
    topo = build_edges(mesh)
    sides = {1: [], 2: [], 3: [], 4: []}
    for e in topo.boundary_edges():
        lab = int(topo.labels[e])
        mid = mesh.vertices[topo.edges[e]].mean(axis=0)
        sides[lab].append(mid)
    assert all(abs(m[0]) < 1e-12 for m in sides[1])          # left
    assert all(abs(m[1]) < 1e-12 for m in sides[2])          # bottom
    assert all(abs(m[0] - 1.0) < 1e-12 for m in sides[3])    # right
    assert all(abs(m[1] - 1.0) < 1e-12 for m in sides[4])    # top


def test_lshape_area():
    mesh = generate_lshape(4)
    mesh.validate()
    assert total_area(mesh) == pytest.approx(3.0, rel=1e-13)


def test_quasi_uniform_square():
    mesh = generate_quasi_uniform_square(8)
    mesh.validate()
    assert total_area(mesh) == pytest.approx(1.0, rel=1e-12)
    # boundary vertices stay exactly on the unit square
    topo = build_edges(mesh)
    bverts = np.unique(topo.edges[topo.boundary_edges()])
    xy = mesh.vertices[bverts]
    on_side = (np.isclose(xy, 0.0, atol=1e-13)
               | np.isclose(xy, 1.0, atol=1e-13))
    assert np.all(on_side.any(axis=1))
    # determinism
    again = generate_quasi_uniform_square(8)
    assert np.array_equal(mesh.vertices, again.vertices)
    assert np.array_equal(mesh.triangles, again.triangles)


def test_uniform_refine_scaling():
    mesh = generate_square(2)
    fine = uniform_refine(mesh)
    fine.validate()
    assert total_area(fine) == pytest.approx(total_area(mesh), rel=1e-13)
    assert mesh_size(fine) < mesh_size(mesh)


def test_refine_marked_subset():
    mesh = generate_square(2)
    fine = refine(mesh, [0, 3])
    fine.validate()
    assert fine.num_triangles > mesh.num_triangles
    assert total_area(fine) == pytest.approx(total_area(mesh), rel=1e-13)


def test_boundary_labels_survive_refinement():
    mesh = generate_square(2)
    fine = refine(mesh, range(mesh.num_triangles))
    topo = build_edges(fine)
    labs = set(int(topo.labels[e]) for e in topo.boundary_edges())
    assert labs == {1, 2, 3, 4}


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=100, deadline=None)
def test_random_refinement_keeps_conformity_and_area(seed):
    rng = np.random.default_rng(seed)
    mesh = generate_square(2)
    area = total_area(mesh)
    for _ in range(rng.integers(1, 4)):
        nt = mesh.num_triangles
        marked = np.nonzero(rng.random(nt) < rng.uniform(0.05, 0.6))[0]
        if len(marked) == 0:
            marked = [int(rng.integers(nt))]
        mesh = refine(mesh, marked)
        mesh.validate()
        assert total_area(mesh) == pytest.approx(area, rel=1e-12)
        # conformity: every interior edge has exactly two owners
        topo = build_edges(mesh)
        owners = (topo.edge_to_tri >= 0).sum(axis=1)
        assert set(np.unique(owners)) <= {1, 2}


def test_fracture_domain_regions():
    mesh = generate_fracture_domain(16)
    mesh.validate()
    assert total_area(mesh) == pytest.approx(4.0, rel=1e-13)
    assert set(np.unique(mesh.regions)) == {0, 1}
    # regions survive bisection
    fine = uniform_refine(mesh)
    assert set(np.unique(fine.regions)) == {0, 1}
    frac_area = fine.areas()[fine.regions == 1].sum()
    assert frac_area == pytest.approx(
        mesh.areas()[mesh.regions == 1].sum(), rel=1e-12)


def test_mesh_file_roundtrip(tmp_path):
    mesh = generate_fracture_domain(8)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.allclose(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.regions, mesh.regions)
    assert back.boundary_labels == mesh.boundary_labels


def test_interior_edge_normals_are_unit():
    topo = build_edges(generate_lshape(2))
    assert np.allclose(np.linalg.norm(topo.normals, axis=1), 1.0)
    assert np.allclose(np.einsum("ea,ea->e", topo.normals, topo.tangents),
                       0.0, atol=1e-14)
