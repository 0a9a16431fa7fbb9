"""Embedded surface tests: generation, intersection kernel, occlusion."""

import numpy as np
import pytest

from cablefsi.errors import GeometryError
from cablefsi.mesh import build_box_mesh
from cablefsi.surface import (
    NODE_GHOST,
    NODE_REAL,
    classify_occlusion,
    generate_cable_surface,
    intersect_edge,
    intersect_segment,
)


def straight_cable(n_sections=11, sides=6, diameter=0.2, length=1.0, axis=2, caps=True):
    pts = np.zeros((n_sections, 3))
    pts[:, axis] = np.linspace(0.0, length, n_sections)
    return generate_cable_surface(pts, sides, diameter, caps=caps)


# ---------------------------------------------------------------------------
# generation


def test_single_segment_hexagon_counts():
    surf = straight_cable(n_sections=2, sides=6, caps=False)
    assert surf.n_nodes == 12
    assert surf.n_triangles == 12


def test_capped_hose_like_counts():
    # 101 sections of 6 nodes: 1200 lateral triangles plus 12 cap triangles
    pts = np.zeros((101, 3))
    pts[:, 0] = np.linspace(0.0, 8.0, 101)
    surf = generate_cable_surface(pts, 6, 0.067, caps=True)
    assert surf.n_triangles == 1212
    assert surf.n_nodes == 101 * 6 + 2
    assert len(surf.sections) == 101
    assert len(surf.sections[0]) == 7  # cap centers join terminal sections
    assert len(surf.sections[50]) == 6


def test_sections_are_coplanar_rings_of_correct_radius():
    surf = straight_cable(n_sections=5, sides=8, diameter=0.3)
    for k, sec in enumerate(surf.sections):
        ring = surf.ref_positions[sec[:8]]
        assert np.ptp(ring[:, 2]) < 1e-12  # coplanar, normal along the axis
        center = ring.mean(axis=0)
        radii = np.linalg.norm(ring - center, axis=1)
        np.testing.assert_allclose(radii, 0.15, rtol=1e-12)


def test_capped_surface_is_watertight():
    surf = straight_cable()
    closure = surf.area_closure()
    assert np.linalg.norm(closure) < 1e-13


def boundary_edge_count(triangles):
    edges = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return int(np.sum(counts == 1))


def test_uncapped_surface_has_boundary_rings():
    surf = straight_cable(sides=6, caps=False)
    assert boundary_edge_count(surf.triangles) == 12  # two terminal rings
    assert boundary_edge_count(straight_cable(sides=6).triangles) == 0


def test_normals_point_outward():
    # divergence theorem: (1/3) sum A n . c = enclosed volume, positive only
    # when every facet is oriented outward
    sides, r, length = 6, 0.1, 1.0
    surf = straight_cable(sides=sides, diameter=2 * r, length=length)
    x, normals, areas = surf.triangle_geometry()
    centers = x.mean(axis=1)
    vol = np.einsum("i,ij,ij->", areas, normals, centers) / 3.0
    polygon_area = 0.5 * sides * r * r * np.sin(2 * np.pi / sides)
    assert vol == pytest.approx(polygon_area * length, rel=1e-12)


def test_curved_centerline_frames_do_not_flip():
    t = np.linspace(0.0, np.pi, 40)
    pts = np.column_stack([np.cos(t), np.sin(t), 0.2 * t])
    surf = generate_cable_surface(pts, 6, 0.05)
    assert np.linalg.norm(surf.area_closure()) < 1e-12
    x, _, areas = surf.triangle_geometry()
    assert np.all(areas > 0.0)


def test_generator_input_validation():
    pts = np.zeros((3, 3))
    pts[:, 2] = [0.0, 0.5, 1.0]
    with pytest.raises(GeometryError, match="sides"):
        generate_cable_surface(pts, 2, 0.1)
    with pytest.raises(GeometryError, match="diameter"):
        generate_cable_surface(pts, 6, -0.1)
    bad = np.zeros((3, 3))  # repeated points
    with pytest.raises(GeometryError, match="tangent"):
        generate_cable_surface(bad, 6, 0.1)


# ---------------------------------------------------------------------------
# intersection kernel


def test_orthogonal_segment_hits_once():
    surf = straight_cable(diameter=0.2)
    hits = intersect_edge(surf, [0.0, 0.0, 0.5], [0.5, 0.0, 0.5])
    assert len(hits) == 1  # from the axis outward: one lateral wall
    assert hits[0].param == pytest.approx(0.1 / 0.5, abs=0.05)
    np.testing.assert_allclose(hits[0].normal[2], 0.0, atol=1e-12)


def test_transversal_segment_hits_twice_sorted():
    surf = straight_cable(diameter=0.2)
    hits = intersect_edge(surf, [-0.5, 0.01, 0.5], [0.5, 0.01, 0.5])
    assert len(hits) == 2
    assert hits[0].param < hits[1].param
    # entry and exit are symmetric about the axis
    assert hits[0].point[0] == pytest.approx(-hits[1].point[0], abs=1e-9)


def test_segment_outside_bbox_misses():
    surf = straight_cable()
    assert intersect_edge(surf, [2.0, 2.0, 0.5], [3.0, 2.0, 0.5]) == []


def test_intersection_symmetry_in_segment_direction():
    surf = straight_cable()
    a, b = [-0.4, 0.03, 0.37], [0.4, -0.06, 0.41]
    fw = intersect_edge(surf, a, b)
    bw = intersect_edge(surf, b, a)
    assert len(fw) == len(bw) == 2
    for h1, h2 in zip(fw, bw[::-1]):
        np.testing.assert_allclose(h1.point, h2.point, atol=1e-9)
        assert h1.param == pytest.approx(1.0 - h2.param, abs=1e-9)


def test_hash_matches_linear_scan():
    surf = straight_cable(n_sections=21, sides=6)
    rng = np.random.default_rng(4)
    for _ in range(60):
        a = rng.uniform([-0.3, -0.3, -0.2], [0.3, 0.3, 1.2])
        b = rng.uniform([-0.3, -0.3, -0.2], [0.3, 0.3, 1.2])
        h1 = intersect_segment(surf, a, b, use_hash=True)
        h2 = intersect_segment(surf, a, b, use_hash=False)
        assert len(h1) == len(h2)
        for x, y in zip(h1, h2):
            assert x.triangle == y.triangle
            np.testing.assert_allclose(x.point, y.point, atol=1e-12)


def test_grazing_segment_through_vertex_is_deterministic():
    surf = straight_cable(diameter=0.2)
    # aim exactly at a section vertex: parity must still be consistent
    target = surf.ref_positions[surf.sections[5][0]]
    hits1 = intersect_segment(surf, [0.9, 0.0, target[2]], target - 1e-12, use_hash=False)
    hits2 = intersect_segment(surf, [0.9, 0.0, target[2]], target - 1e-12, use_hash=False)
    assert len(hits1) == len(hits2)
    for a, b in zip(hits1, hits2):
        assert a.param == b.param


# ---------------------------------------------------------------------------
# occlusion


def test_occlusion_inside_and_outside():
    surf = straight_cable(diameter=0.3)
    mesh = build_box_mesh(((-0.5, -0.5, -0.2), (0.5, 0.5, 1.2)), (8, 8, 8))
    status = classify_occlusion(mesh, surf)
    inside = (np.abs(mesh.nodes[:, 0]) < 0.05) & (np.abs(mesh.nodes[:, 1]) < 0.05) & (
        (mesh.nodes[:, 2] > 0.1) & (mesh.nodes[:, 2] < 0.9)
    )
    assert np.all(status[inside] == NODE_GHOST)
    far = np.linalg.norm(mesh.nodes[:, :2], axis=1) > 0.25
    assert np.all(status[far] == NODE_REAL)
    assert status.sum() > 0


def test_occlusion_no_surface_contact_all_real():
    surf = straight_cable(diameter=0.1)
    mesh = build_box_mesh(((2.0, 2.0, 2.0), (3.0, 3.0, 3.0)), (3, 3, 3))
    status = classify_occlusion(mesh, surf)
    assert np.all(status == NODE_REAL)


def test_occlusion_rigid_translation_invariance():
    surf = straight_cable(diameter=0.3)
    mesh = build_box_mesh(((-0.5, -0.5, -0.2), (0.5, 0.5, 1.2)), (6, 6, 8))
    s1 = classify_occlusion(mesh, surf)
    shift = np.array([0.123, -0.071, 0.045])
    surf.displacements[:] = shift
    surf.invalidate_motion_caches()
    mesh2 = build_box_mesh(((-0.5, -0.5, -0.2), (0.5, 0.5, 1.2)), (6, 6, 8))
    mesh2.nodes += shift
    s2 = classify_occlusion(mesh2, surf)
    np.testing.assert_array_equal(s1, s2)


def test_occlusion_debug_mode_runs():
    surf = straight_cable(diameter=0.3)
    mesh = build_box_mesh(((-0.5, -0.5, 0.3), (0.5, 0.5, 0.7)), (4, 4, 2))
    s1 = classify_occlusion(mesh, surf, debug=True)
    s2 = classify_occlusion(mesh, surf, debug=False)
    np.testing.assert_array_equal(s1, s2)
