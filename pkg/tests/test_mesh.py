"""Mesh, dual-geometry and bisection tests.

Closure identities and volume bookkeeping are checked against exact
geometric invariants; refinement quality is measured empirically.
"""

import numpy as np
import pytest

from cablefsi.errors import GeometryError
from cablefsi.mesh import (
    Mesh,
    build_box_mesh,
    check_conformity,
    compute_dual_geometry,
    load_mesh,
    refine_edges,
    save_mesh,
)


def box(nx=2, ny=2, nz=2, size=1.0):
    return build_box_mesh(((0, 0, 0), (size, size, size)), (nx, ny, nz))


# ---------------------------------------------------------------------------
# box mesher


def test_box_mesh_counts_and_volume():
    m = box(2, 3, 4)
    assert m.n_nodes == 3 * 4 * 5
    assert m.n_tets == 6 * 2 * 3 * 4
    assert m.volumes.sum() == pytest.approx(1.0, rel=1e-13)
    assert np.all(m.volumes > 0.0)


def test_box_mesh_single_cube_is_six_tets():
    m = box(1, 1, 1)
    assert m.n_tets == 6
    np.testing.assert_allclose(m.volumes, 1.0 / 6.0, rtol=1e-13)
    assert check_conformity(m)


def test_box_mesh_is_conforming():
    assert check_conformity(box(3, 2, 2))


def test_box_mesh_boundary_faces_close():
    m = box(2, 2, 2)
    # closed surface: area-weighted outward normals sum to zero
    x = m.nodes[m.boundary_faces]
    nvec = 0.5 * np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    np.testing.assert_allclose(nvec.sum(axis=0), 0.0, atol=1e-13)
    assert nvec.shape[0] == 2 * 6 * 4  # two triangles per boundary cube face
    # every face points outward
    centers = x.mean(axis=1) - 0.5
    assert np.all(np.einsum("ij,ij->i", nvec, centers) > 0.0)


def test_box_mesh_side_tags():
    m = build_box_mesh(((0, 0, 0), (1, 1, 1)), (2, 2, 2),
                       side_tags={"xmin": "inflow", "xmax": "outflow", "ymin": "slip"})
    from cablefsi.mesh import BOUNDARY_TAGS

    xmin_faces = np.all(m.nodes[m.boundary_faces, 0] < 1e-12, axis=1)
    assert np.all(m.boundary_tags[xmin_faces] == BOUNDARY_TAGS.index("inflow"))
    ymax_faces = np.all(m.nodes[m.boundary_faces, 1] > 1 - 1e-12, axis=1)
    assert np.all(m.boundary_tags[ymax_faces] == BOUNDARY_TAGS.index("farfield"))


def test_box_mesh_invalid_domain():
    with pytest.raises(GeometryError):
        build_box_mesh(((0, 0, 0), (0, 1, 1)), (2, 2, 2))
    with pytest.raises(GeometryError):
        build_box_mesh(((0, 0, 0), (1, 1, 1)), (0, 2, 2))


def test_edges_unique_and_complete():
    m = box(2, 2, 2)
    edges = {tuple(e) for e in m.edges}
    assert len(edges) == len(m.edges)
    for t in m.tets:
        for p in range(4):
            for q in range(p + 1, 4):
                a, b = sorted((t[p], t[q]))
                assert (a, b) in edges


# ---------------------------------------------------------------------------
# dual geometry


def test_dual_volumes_partition_total():
    m = box(3, 2, 2)
    dual = compute_dual_geometry(m)
    assert dual.volumes.sum() == pytest.approx(m.volumes.sum(), rel=1e-13)
    assert np.all(dual.volumes > 0.0)


def test_dual_single_tet_quarters():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    m = Mesh(nodes, np.array([[0, 1, 2, 3]]), np.array([3]))
    dual = compute_dual_geometry(m)
    np.testing.assert_allclose(dual.volumes, m.volumes[0] / 4.0, rtol=1e-13)


def test_dual_closure_identity():
    """Interior facet vectors plus boundary closure vanish at every node."""
    m = box(3, 3, 2)
    dual = compute_dual_geometry(m)
    total = np.zeros((m.n_nodes, 3))
    np.add.at(total, m.edges[:, 0], dual.facets)
    np.add.at(total, m.edges[:, 1], -dual.facets)
    total += dual.node_closure
    scale = np.abs(dual.facets).max()
    assert np.abs(total).max() < 1e-12 * scale


def test_dual_facet_antisymmetry_orientation():
    m = box(2, 2, 2)
    dual = compute_dual_geometry(m)
    d = m.nodes[m.edges[:, 1]] - m.nodes[m.edges[:, 0]]
    dots = np.einsum("ij,ij->i", dual.facets, d)
    assert np.all(dots > 0.0)  # facets point from low to high node


def test_dual_boundary_patch_areas():
    m = box(2, 2, 2)
    dual = compute_dual_geometry(m)
    patch_total = np.zeros(3)
    for _, (ids, vecs) in dual.compact_boundary_patches().items():
        patch_total += vecs.sum(axis=0)
    np.testing.assert_allclose(patch_total, 0.0, atol=1e-12)
    # per-node closure magnitude equals the patch sums
    agg = np.zeros((m.n_nodes, 3))
    for _, (ids, vecs) in dual.compact_boundary_patches().items():
        np.add.at(agg, ids, vecs)
    np.testing.assert_allclose(agg, dual.node_closure, atol=1e-13)


def test_dual_degenerate_tet_rejected():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(GeometryError, match="element 0"):
        Mesh(nodes, np.array([[0, 1, 2, 3]]), np.array([3]))


# ---------------------------------------------------------------------------
# newest-vertex bisection


def test_refine_no_marks_is_identity():
    m = box(2, 2, 2)
    assert refine_edges(m, []) is m


def test_refine_single_edge_preserves_volume_and_conformity():
    m = box(2, 2, 2)
    edge = tuple(m.edges[len(m.edges) // 2])
    r = refine_edges(m, [edge])
    assert r.volumes.sum() == pytest.approx(m.volumes.sum(), rel=1e-13)
    assert check_conformity(r)
    assert r.n_tets > m.n_tets
    # the marked edge is gone
    refined_edges = {tuple(e) for e in r.edges}
    assert tuple(sorted(edge)) not in refined_edges


def test_refine_all_edges_three_passes_quality():
    """Repeated full refinement keeps a positive dihedral-angle floor."""
    m = box(1, 1, 1)
    angles = [m.min_dihedral_angle()]
    for _ in range(3):
        m = refine_edges(m, [tuple(e) for e in m.edges])
        assert check_conformity(m)
        assert np.all(m.volumes > 0.0)
        angles.append(m.min_dihedral_angle())
    assert m.volumes.sum() == pytest.approx(1.0, rel=1e-12)
    # newest-vertex bisection cycles among finitely many shapes: the angle
    # never collapses
    assert min(angles) > np.radians(20.0)
    assert angles[-1] == pytest.approx(angles[1], rel=1e-10)


def test_refine_parent_edges_in_creation_order():
    m = box(1, 1, 1)
    r = refine_edges(m, [tuple(e) for e in m.edges])
    assert r.parent_edges is not None
    for nid, (a, b) in r.parent_edges.items():
        assert a < nid and b < nid  # parents exist before the midpoint
        np.testing.assert_allclose(r.nodes[nid], 0.5 * (r.nodes[a] + r.nodes[b]), atol=1e-14)


def test_refine_boundary_tags_survive():
    m = build_box_mesh(((0, 0, 0), (1, 1, 1)), (1, 1, 1), side_tags={"xmin": "inflow"})
    r = refine_edges(m, [tuple(e) for e in m.edges])
    from cablefsi.mesh import BOUNDARY_TAGS

    xmin_faces = np.all(r.nodes[r.boundary_faces, 0] < 1e-12, axis=1)
    assert xmin_faces.sum() > 0
    assert np.all(r.boundary_tags[xmin_faces] == BOUNDARY_TAGS.index("inflow"))
    assert np.all(r.boundary_tags[~xmin_faces] == BOUNDARY_TAGS.index("farfield"))
    # boundary area preserved per side
    x = r.nodes[r.boundary_faces]
    nvec = 0.5 * np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    assert np.linalg.norm(nvec[xmin_faces].sum(axis=0) + [1, 0, 0]) < 1e-12


def test_refine_unknown_edge_rejected():
    m = box(1, 1, 1)
    with pytest.raises(GeometryError):
        refine_edges(m, [(0, m.n_nodes + 3)])


def test_refine_local_marking_stays_local():
    m = box(4, 4, 4)
    # mark a single short edge; growth must stay bounded (closure is local)
    edge = tuple(m.edges[0])
    r = refine_edges(m, [edge])
    assert r.n_tets < m.n_tets + 60


# ---------------------------------------------------------------------------
# mesh file format


def test_mesh_roundtrip(tmp_path):
    m = build_box_mesh(((0, 0, 0), (2, 1, 1)), (2, 1, 1), side_tags={"xmax": "outflow"})
    path = tmp_path / "mesh.txt"
    save_mesh(m, path)
    m2 = load_mesh(path)
    np.testing.assert_allclose(m2.nodes, m.nodes)
    assert m2.n_tets == m.n_tets
    assert m2.volumes.sum() == pytest.approx(m.volumes.sum(), rel=1e-13)
    assert sorted(map(tuple, np.sort(m2.boundary_faces, axis=1))) == sorted(
        map(tuple, np.sort(m.boundary_faces, axis=1))
    )


def test_mesh_load_bad_node_reference(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2\n0 0 0\n1 0 0\n1\n0 1 2 9\n")
    with pytest.raises(GeometryError):
        load_mesh(path)
