"""Master-slave motion and load transfer between cable and surface."""

import numpy as np
import pytest

from cablefsi.cable import CableModel, interpolate_at_point, zero_state
from cablefsi.coupling import (
    MasterLoads,
    aggregate_loads,
    distribute_loads,
    pair_slaves,
    update_surface_motion,
    virtual_work_check,
)
from cablefsi.errors import GeometryError
from cablefsi.rotation import rotation_matrix
from cablefsi.surface import EmbeddedSurface, generate_cable_surface

EA = 1.2e5
EI = 35.0
GJ = 20.0
M_L = 0.4
J_L = 1.1e-4


def straight_cable(n_nodes=5, length=1.0):
    z = np.linspace(0.0, length, n_nodes)
    pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
    return CableModel(pts, EA=EA, EI=EI, GJ=GJ, m_L=M_L, rotary_inertia=J_L)


def matched_surface(model, sides=6, diameter=0.08, refine=2, caps=True):
    """Tube around the cable with ``refine`` sections per element."""
    n = (model.n_nodes - 1) * refine + 1
    t = np.linspace(0.0, 1.0, n)[:, None]
    line = (1.0 - t) * model.points[0] + t * model.points[-1]
    return generate_cable_surface(line, sides, diameter, caps=caps)


def test_pairing_midpoint_section_has_half_coordinate_and_radius_offsets():
    model = straight_cable(n_nodes=2)
    line = [(0, 0, 0), (0, 0, 0.5), (0, 0, 1)]
    surf = generate_cable_surface(line, 6, 0.08, caps=False)
    pairing = pair_slaves(surf, model)
    mid = surf.sections[1]
    assert np.all(pairing.element[mid] == 0)
    np.testing.assert_allclose(pairing.s[mid], 0.5, rtol=0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(pairing.d[mid], axis=1), 0.04, rtol=1e-12)


def test_pairing_cap_centers_coincide_with_terminal_masters():
    model = straight_cable(n_nodes=3)
    surf = matched_surface(model, refine=1, caps=True)
    pairing = pair_slaves(surf, model)
    # cap centers are the last node of each terminal section
    for sec, s_expect in ((surf.sections[0], 0.0), (surf.sections[-1], 1.0)):
        center = sec[-1]
        assert np.linalg.norm(pairing.d[center]) < 1e-14
        assert pairing.s[center] == pytest.approx(s_expect, abs=1e-14)


def test_pairing_tie_breaks_to_lower_element_id():
    model = straight_cable(n_nodes=3)  # shared node at z = 0.5
    surf = generate_cable_surface([(0, 0, 0.2), (0, 0, 0.5), (0, 0, 0.8)], 6, 0.05, caps=False)
    pairing = pair_slaves(surf, model)
    shared = surf.sections[1]
    assert np.all(pairing.element[shared] == 0)
    np.testing.assert_allclose(pairing.s[shared], 1.0, rtol=0, atol=1e-14)


def test_pairing_rejects_sections_with_too_few_slaves():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    surf = EmbeddedSurface(pts, [[0, 1, 2]], [np.array([0, 1]), np.array([2])])
    with pytest.raises(GeometryError, match="at least 3"):
        pair_slaves(surf, straight_cable())


def test_pure_translation_moves_every_slave_identically():
    model = straight_cable()
    surf = matched_surface(model)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.u[:] = [0.3, -0.1, 0.07]
    state.v[:] = [1.5, 2.0, -0.5]
    u_s, v_s = update_surface_motion(surf, pairing, model, state)
    np.testing.assert_allclose(u_s, np.broadcast_to([0.3, -0.1, 0.07], u_s.shape), atol=1e-15)
    np.testing.assert_allclose(v_s, np.broadcast_to([1.5, 2.0, -0.5], v_s.shape), atol=1e-15)
    np.testing.assert_array_equal(surf.displacements, u_s)


def test_pure_spin_gives_tangential_speed_omega_r():
    model = straight_cable()
    surf = matched_surface(model, caps=False)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    w = 7.3
    state.omega[:] = [0.0, 0.0, w]
    _, v_s = update_surface_motion(surf, pairing, model, state)
    r = np.linalg.norm(pairing.d, axis=1)
    np.testing.assert_allclose(np.linalg.norm(v_s, axis=1), w * r, rtol=1e-13)
    # tangential: orthogonal to both the offset and the axis
    assert np.max(np.abs(np.einsum("ij,ij->i", v_s, pairing.d))) < 1e-12
    assert np.max(np.abs(v_s[:, 2])) == 0.0


def test_half_turn_reflects_slaves_through_the_axis():
    model = straight_cable()
    surf = matched_surface(model, caps=False)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.theta[:] = [0.0, 0.0, np.pi]
    u_s, _ = update_surface_motion(surf, pairing, model, state)
    np.testing.assert_allclose(u_s, -2.0 * pairing.d, atol=1e-14)


def test_rigid_motion_reproduces_rigid_map_of_reference_positions():
    rng = np.random.default_rng(7)
    model = straight_cable(n_nodes=6)
    surf = matched_surface(model, sides=8, refine=3)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    c = rng.normal(size=3)
    th = rng.normal(size=3)
    state.u[:] = c
    state.theta[:] = th
    update_surface_motion(surf, pairing, model, state)
    R = rotation_matrix(th)
    rigid = pairing.master_ref[pairing.section] + c + pairing.d @ R.T
    np.testing.assert_allclose(surf.positions, rigid, atol=1e-13)


def test_motion_transfer_matches_per_slave_oracle():
    rng = np.random.default_rng(21)
    model = straight_cable(n_nodes=7)
    surf = matched_surface(model, sides=5, refine=2)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.u[:] = 0.02 * rng.normal(size=(model.n_nodes, 3))
    state.theta[:] = 0.3 * rng.normal(size=(model.n_nodes, 3))
    state.v[:] = rng.normal(size=(model.n_nodes, 3))
    state.omega[:] = rng.normal(size=(model.n_nodes, 3))
    u_s, v_s = update_surface_motion(surf, pairing, model, state)
    for j in rng.choice(surf.n_nodes, size=12, replace=False):
        u_m, th_m, v_m, om_m = interpolate_at_point(model, state, pairing.element[j], pairing.s[j])
        rd = rotation_matrix(th_m) @ pairing.d[j]
        np.testing.assert_allclose(u_s[j], u_m + rd - pairing.d[j], atol=1e-14)
        np.testing.assert_allclose(v_s[j], v_m + np.cross(om_m, rd), atol=1e-14)


def test_symmetric_radial_forces_cancel_at_master():
    model = straight_cable()
    surf = matched_surface(model, caps=False)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    f_s = -3.7 * pairing.d  # equal inward radial pull on every ring
    loads = aggregate_loads(f_s, pairing, model, state)
    scale = np.abs(f_s).max()
    assert np.abs(loads.force).max() < 1e-13 * scale
    assert np.abs(loads.moment).max() < 1e-13 * scale


def test_single_force_moment_is_offset_cross_force():
    rng = np.random.default_rng(3)
    model = straight_cable()
    surf = matched_surface(model)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.theta[:] = 0.4 * rng.normal(size=(model.n_nodes, 3))
    f = rng.normal(size=3)
    j = 17
    f_s = np.zeros((surf.n_nodes, 3))
    f_s[j] = f
    loads = aggregate_loads(f_s, pairing, model, state)
    _, th_m, _, _ = interpolate_at_point(model, state, pairing.element[j], pairing.s[j])
    rd = rotation_matrix(th_m) @ pairing.d[j]
    sec = pairing.section[j]
    np.testing.assert_allclose(loads.force[sec], f, rtol=1e-15)
    np.testing.assert_allclose(loads.moment[sec], np.cross(rd, f), rtol=0, atol=1e-15)
    mask = np.ones(pairing.n_masters, dtype=bool)
    mask[sec] = False
    assert np.all(loads.force[mask] == 0.0) and np.all(loads.moment[mask] == 0.0)


def test_zero_slave_forces_give_zero_loads_everywhere():
    model = straight_cable()
    surf = matched_surface(model)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    loads = aggregate_loads(np.zeros((surf.n_nodes, 3)), pairing, model, state)
    assert np.all(loads.force == 0.0) and np.all(loads.moment == 0.0)
    f_n, m_n = distribute_loads(loads, pairing, model)
    assert np.all(f_n == 0.0) and np.all(m_n == 0.0)


def test_distribute_respects_shape_function_weights():
    model = straight_cable(n_nodes=2)
    line = [(0, 0, 0), (0, 0, 0.5), (0, 0, 1)]
    surf = generate_cable_surface(line, 6, 0.08, caps=False)
    pairing = pair_slaves(surf, model)
    force = np.zeros((pairing.n_masters, 3))
    moment = np.zeros((pairing.n_masters, 3))
    force[1] = [2.0, 0.0, 0.0]  # master at the element midpoint
    moment[1] = [0.0, 3.0, 0.0]
    f_n, m_n = distribute_loads(MasterLoads(force, moment), pairing, model)
    np.testing.assert_allclose(f_n, [[1.0, 0, 0], [1.0, 0, 0]], atol=1e-15)
    np.testing.assert_allclose(m_n, [[0, 1.5, 0], [0, 1.5, 0]], atol=1e-15)
    # a master sitting on a node sends its whole load there
    force[:] = 0.0
    force[0] = [0.0, 0.0, 5.0]
    f_n, _ = distribute_loads(MasterLoads(force, np.zeros_like(force)), pairing, model)
    np.testing.assert_allclose(f_n, [[0, 0, 5.0], [0, 0, 0]], atol=1e-15)


def test_global_force_balance_for_random_loads():
    rng = np.random.default_rng(11)
    model = straight_cable(n_nodes=8)
    surf = matched_surface(model, sides=7, refine=3)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.theta[:] = 0.2 * rng.normal(size=(model.n_nodes, 3))
    f_s = rng.normal(size=(surf.n_nodes, 3))
    loads = aggregate_loads(f_s, pairing, model, state)
    f_n, _ = distribute_loads(loads, pairing, model)
    total = f_s.sum(axis=0)
    np.testing.assert_allclose(f_n.sum(axis=0), total, rtol=1e-13)
    np.testing.assert_allclose(loads.force.sum(axis=0), total, rtol=1e-13)


def test_moment_about_origin_is_preserved_for_a_point_force():
    rng = np.random.default_rng(4)
    model = straight_cable(n_nodes=5)
    surf = matched_surface(model, refine=2)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.theta[:] = 0.5 * rng.normal(size=(model.n_nodes, 3))
    f = rng.normal(size=3)
    j = 23
    f_s = np.zeros((surf.n_nodes, 3))
    f_s[j] = f
    loads = aggregate_loads(f_s, pairing, model, state)
    f_n, m_n = distribute_loads(loads, pairing, model)
    _, th_m, _, _ = interpolate_at_point(model, state, pairing.element[j], pairing.s[j])
    rd = rotation_matrix(th_m) @ pairing.d[j]
    x_slave = pairing.master_ref[pairing.section[j]] + rd
    want = np.cross(x_slave, f)
    got = np.cross(model.points, f_n).sum(axis=0) + m_n.sum(axis=0)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12 * np.linalg.norm(want))


def test_virtual_work_balances_for_random_forces_and_motions():
    rng = np.random.default_rng(42)
    model = straight_cable(n_nodes=9)
    surf = matched_surface(model, sides=6, refine=2)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    state.theta[:] = 0.6 * rng.normal(size=(model.n_nodes, 3))
    state.u[:] = 0.05 * rng.normal(size=(model.n_nodes, 3))
    worst = 0.0
    for _ in range(100):
        f_s = rng.normal(size=(surf.n_nodes, 3))
        du = rng.normal(size=(model.n_nodes, 3))
        dth = rng.normal(size=(model.n_nodes, 3))
        dw_f, dw_s = virtual_work_check(f_s, pairing, model, state, du, dth)
        worst = max(worst, abs(dw_f - dw_s) / max(abs(dw_f), 1e-300))
    assert worst <= 1e-12


def test_virtual_work_vanishes_for_zero_motion_and_collapses_for_translation():
    rng = np.random.default_rng(5)
    model = straight_cable()
    surf = matched_surface(model)
    pairing = pair_slaves(surf, model)
    state = zero_state(model)
    f_s = rng.normal(size=(surf.n_nodes, 3))
    zeros = np.zeros((model.n_nodes, 3))
    assert virtual_work_check(f_s, pairing, model, state, zeros, zeros) == (0.0, 0.0)
    a = np.array([0.2, -1.0, 0.4])
    du = np.broadcast_to(a, (model.n_nodes, 3)).copy()
    dw_f, dw_s = virtual_work_check(f_s, pairing, model, state, du, zeros)
    want = float(f_s.sum(axis=0) @ a)
    assert dw_f == pytest.approx(want, rel=1e-13)
    assert dw_s == pytest.approx(want, rel=1e-13)
