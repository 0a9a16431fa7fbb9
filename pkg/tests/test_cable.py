"""Corotational beam element, integrators, interpolation, eigenanalysis."""

import numpy as np
import pytest

from cablefsi.cable import (
    CableModel,
    CableState,
    assemble_internal_forces,
    interpolate_at_point,
    interpolate_many,
    natural_frequencies,
    step_central_difference,
    step_midpoint,
    zero_state,
)
from cablefsi.errors import StepError
from cablefsi.rotation import rotation_matrix, rotation_vector

# solid circular section, hose-like constants
E, NU, D = 17.0e6, 0.42, 0.067
R = 0.5 * D
AREA = np.pi * R * R
EA = E * AREA
EI = E * np.pi * R**4 / 4.0
G = E / (2.0 * (1.0 + NU))
GJ = G * np.pi * R**4 / 2.0
GA = G * AREA
M_L = 0.38
J_L = M_L * R * R / 2.0


def straight_model(n_nodes=11, length=8.0, bc=(), **kw):
    pts = np.zeros((n_nodes, 3))
    pts[:, 0] = np.linspace(0.0, length, n_nodes)
    args = dict(EA=EA, EI=EI, GJ=GJ, GA_s=GA, m_L=M_L, rotary_inertia=J_L, bc=bc)
    args.update(kw)
    return CableModel(pts, **args)


def curved_model(n_nodes=7, bc=()):
    s = np.linspace(0.0, 1.0, n_nodes)
    pts = np.column_stack([2.0 * s, 0.4 * np.sin(2.0 * s), 0.3 * s * s])
    return CableModel(
        pts, EA=EA, EI=EI, GJ=GJ, GA_s=GA, m_L=M_L, rotary_inertia=J_L, bc=bc
    )


# ---------------------------------------------------------------------------
# internal forces


def test_undeformed_forces_vanish():
    model = curved_model()
    F = assemble_internal_forces(model, zero_state(model))
    assert np.abs(F).max() == 0.0


def test_uniform_axial_strain_end_forces():
    model = straight_model(n_nodes=9)
    eps = 1e-3
    st = zero_state(model)
    st.u[:, 0] = eps * model.points[:, 0]
    F = assemble_internal_forces(model, st)
    np.testing.assert_allclose(F[0, 0], -EA * eps, rtol=1e-12)
    np.testing.assert_allclose(F[-1, 0], EA * eps, rtol=1e-12)
    assert np.abs(F[1:-1]).max() < 1e-9 * EA * eps
    assert np.abs(F[:, 1:]).max() < 1e-9 * EA * eps


def test_rigid_motion_objectivity():
    model = curved_model()
    rng = np.random.default_rng(3)
    for _ in range(25):
        theta = rng.uniform(-np.pi, np.pi, 3)
        c = rng.uniform(-2.0, 2.0, 3)
        Rm = rotation_matrix(theta)
        st = zero_state(model)
        st.u = model.points @ Rm.T + c - model.points
        st.theta[:] = theta
        F = assemble_internal_forces(model, st)
        assert np.abs(F).max() <= 1e-10 * EA


def test_tangent_matches_linear_stiffness():
    model = curved_model(n_nodes=4)
    n6 = 6 * model.n_nodes
    K_fd = np.zeros((n6, n6))
    eps = 1e-7
    for k in range(n6):
        plus, minus = zero_state(model), zero_state(model)
        node, dof = divmod(k, 6)
        fld = "u" if dof < 3 else "theta"
        getattr(plus, fld)[node, dof % 3] += eps
        getattr(minus, fld)[node, dof % 3] -= eps
        df = assemble_internal_forces(model, plus) - assemble_internal_forces(model, minus)
        K_fd[:, k] = df.reshape(-1) / (2.0 * eps)
    K = model.linear_stiffness()
    assert np.linalg.norm(K_fd - K) <= 1e-6 * np.linalg.norm(K)


def test_collapsed_element_raises():
    model = straight_model(n_nodes=3, length=1.0)
    st = zero_state(model)
    st.u[1, 0] = -0.5 + 1e-9  # node 1 onto node 0
    with pytest.raises(StepError, match="collapsed"):
        assemble_internal_forces(model, st)


# ---------------------------------------------------------------------------
# explicit stepping


def test_central_difference_exact_quadratic_under_constant_force():
    # equal nodal masses: uniform acceleration, bitwise-zero deformation,
    # so the update reduces to the scheme's exact quadratic
    model = straight_model(n_nodes=2, length=1.0)
    g = 2.7
    lm = model.lumped_mass()
    f = np.zeros((model.n_nodes, 6))
    f[:, 0] = g * lm[:, 0]
    st = zero_state(model)
    dt = 0.5 * model.stable_timestep()
    for _ in range(50):
        st = step_central_difference(model, st, f, dt)
    t = 50 * dt
    np.testing.assert_allclose(st.u[:, 0], 0.5 * g * t * t, rtol=1e-13)
    np.testing.assert_allclose(st.v[:, 0], g * t, rtol=1e-12)


def test_central_difference_free_flight():
    model = straight_model(n_nodes=4, length=1.0)
    st = zero_state(model)
    v = np.array([0.3, -0.1, 0.2])
    st.v[:] = v
    dt = 0.5 * model.stable_timestep()
    for _ in range(40):
        st = step_central_difference(model, st, None, dt)
    np.testing.assert_allclose(st.u, np.tile(v * 40 * dt, (4, 1)), rtol=1e-13)


def test_central_difference_dispersion():
    # single-DOF axial oscillator: u_n = u0 cos(n w_d dt) exactly, with the
    # scheme's shifted frequency w_d = 2 asin(w dt / 2) / dt
    model = straight_model(n_nodes=2, length=1.0, bc=("clamp:first",))
    m = model.lumped_mass()[1, 0]
    w = np.sqrt(EA / 1.0 / m)
    dt = 0.5 / w
    u0 = 1e-4
    st = zero_state(model)
    st.u[1, 0] = u0
    wd = 2.0 * np.arcsin(w * dt / 2.0) / dt
    for n in range(1, 500):
        st = step_central_difference(model, st, None, dt)
        assert abs(st.u[1, 0] - u0 * np.cos(wd * n * dt)) <= 1e-10 * u0


def test_central_difference_momentum_conservation():
    model = curved_model(n_nodes=6)  # free-free
    rng = np.random.default_rng(8)
    st = zero_state(model)
    st.u = 0.01 * rng.standard_normal((6, 3))
    st.v = rng.standard_normal((6, 3))
    lm = model.lumped_mass()[:, 0]
    dt = 0.2 * model.stable_timestep()
    p = (lm[:, None] * st.v).sum(axis=0)
    scale = (lm[:, None] * np.abs(st.v)).sum()
    for _ in range(200):
        st = step_central_difference(model, st, None, dt)
        p_new = (lm[:, None] * st.v).sum(axis=0)
        assert np.abs(p_new - p).max() <= 1e-12 * scale
        p = p_new


def test_central_difference_warns_above_stability(caplog):
    model = straight_model(n_nodes=4, length=1.0)
    dt = 3.0 * model.stable_timestep()
    with caplog.at_level("WARNING"):
        step_central_difference(model, zero_state(model), None, dt)
    assert any("stability" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# implicit stepping


def test_midpoint_energy_conservation_linear_oscillator():
    model = straight_model(n_nodes=2, length=1.0, bc=("clamp:first",))
    m = model.lumped_mass()[1, 0]
    k = EA / 1.0
    w = np.sqrt(k / m)
    dt = 0.2 / w
    st = zero_state(model)
    st.u[1, 0] = 1e-3
    H0 = 0.5 * k * st.u[1, 0] ** 2
    for _ in range(10_000):
        st = step_midpoint(model, st, None, dt)
        H = 0.5 * m * st.v[1, 0] ** 2 + 0.5 * k * st.u[1, 0] ** 2
        assert abs(H - H0) <= 1e-10 * H0


def test_midpoint_rest_state_unchanged():
    model = curved_model(bc=("pin:first",))
    st = zero_state(model)
    out = step_midpoint(model, st, None, 1e-3)
    assert np.abs(out.u).max() == 0.0
    assert np.abs(out.v).max() == 0.0
    assert out.t == pytest.approx(1e-3)


def test_midpoint_matches_central_difference_at_second_order():
    model = straight_model(n_nodes=9, bc=("pin:first", "pin:last"))
    x = model.points[:, 0]
    bump = 1e-3 * np.sin(np.pi * x / x[-1])

    def gap(dt, steps):
        a = zero_state(model)
        a.u[:, 1] = bump
        b = a.copy()
        for _ in range(steps):
            a = step_central_difference(model, a, None, dt)
            b = step_midpoint(model, b, None, dt)
        return np.linalg.norm(a.u - b.u)

    dt0 = 0.5 * model.stable_timestep()
    e1 = gap(dt0, 64)
    e2 = gap(dt0 / 2.0, 128)
    assert 2.5 < e1 / e2 < 6.0  # both second order: gap shrinks ~4x


def test_midpoint_nonconvergence_reports_residual():
    model = straight_model(n_nodes=3, length=1.0, newton_maxiter=1, newton_tol=1e-16)
    st = zero_state(model)
    st.v[:, 1] = 5.0
    st.v[0] = 0.0
    with pytest.raises(StepError) as err:
        step_midpoint(model, st, None, 1e-2)
    assert err.value.residual is not None and err.value.residual > 0.0


# ---------------------------------------------------------------------------
# interpolation


def test_interpolation_endpoints_and_midpoint():
    model = curved_model()
    rng = np.random.default_rng(5)
    st = zero_state(model)
    st.u = rng.standard_normal(st.u.shape)
    st.theta = 0.1 * rng.standard_normal(st.u.shape)
    st.v = rng.standard_normal(st.u.shape)
    st.omega = rng.standard_normal(st.u.shape)
    u, th, v, om = interpolate_at_point(model, st, 2, 0.0)
    np.testing.assert_array_equal(u, st.u[2])
    np.testing.assert_array_equal(om, st.omega[2])
    u, th, v, om = interpolate_at_point(model, st, 2, 0.5)
    np.testing.assert_allclose(u, 0.5 * (st.u[2] + st.u[3]), rtol=1e-15)
    np.testing.assert_allclose(th, 0.5 * (st.theta[2] + st.theta[3]), rtol=1e-15)

    ub, thb, vb, omb = interpolate_many(model, st, [2, 2], [0.0, 0.5])
    np.testing.assert_array_equal(ub[0], st.u[2])
    np.testing.assert_allclose(vb[1], 0.5 * (st.v[2] + st.v[3]), rtol=1e-15)


def test_interpolation_reproduces_linear_fields():
    model = straight_model(n_nodes=6, length=2.0)
    st = zero_state(model)
    grad = np.array([0.3, -0.7, 1.1])
    st.u = model.points[:, :1] * grad  # linear in arclength
    for e in range(model.n_elements):
        for s in (0.1, 0.37, 0.92):
            u, _, _, _ = interpolate_at_point(model, st, e, s)
            x = (1 - s) * model.points[e, 0] + s * model.points[e + 1, 0]
            np.testing.assert_allclose(u, x * grad, rtol=1e-13)


def test_interpolation_range_checks():
    model = straight_model(n_nodes=3)
    st = zero_state(model)
    with pytest.raises(IndexError):
        interpolate_at_point(model, st, 5, 0.5)
    with pytest.raises(ValueError):
        interpolate_at_point(model, st, 0, 1.5)


# ---------------------------------------------------------------------------
# eigenanalysis


def test_pinned_pinned_fundamental_frequency():
    L = 8.0
    model = straight_model(n_nodes=101, length=L, bc=("pin:first", "pin:last"))
    f = natural_frequencies(model, 4)
    f_exact = (np.pi / L) ** 2 * np.sqrt(EI / M_L) / (2.0 * np.pi)
    # mode 0 is the zero-frequency torsion spin; 1 and 2 the bending pair
    assert f[0] < 1e-3 * f_exact
    assert abs(f[1] - f_exact) <= 0.01 * f_exact
    assert abs(f[2] - f_exact) <= 0.01 * f_exact


def test_free_free_rigid_modes():
    model = straight_model(n_nodes=21)
    f = natural_frequencies(model, 8)
    assert np.all(f[:6] < 1e-4 * f[6])
    assert f[6] > 0.0


def test_frequency_scaling_with_bending_stiffness():
    bc = ("pin:first", "pin:last")
    f1 = natural_frequencies(straight_model(n_nodes=41, bc=bc), 3)
    f2 = natural_frequencies(
        straight_model(n_nodes=41, bc=bc, EI=2.0 * EI, GA_s=2.0 * GA), 3
    )
    np.testing.assert_allclose(f2[1] / f1[1], np.sqrt(2.0), rtol=1e-9)
    np.testing.assert_allclose(f2[2] / f1[2], np.sqrt(2.0), rtol=1e-9)


def test_model_validation():
    pts = np.zeros((3, 3))
    pts[:, 0] = [0.0, 1.0, 2.0]
    with pytest.raises(ValueError, match="positive"):
        CableModel(pts, EA=EA, EI=EI, GJ=GJ, m_L=-1.0, rotary_inertia=J_L)
    with pytest.raises(ValueError, match="boundary condition"):
        CableModel(pts, EA=EA, EI=EI, GJ=GJ, m_L=M_L, rotary_inertia=J_L, bc=("pin:9",))
    with pytest.raises(ValueError, match="kind"):
        CableModel(pts, EA=EA, EI=EI, GJ=GJ, m_L=M_L, rotary_inertia=J_L, bc=("weld:0",))


def test_rotation_vector_roundtrip_batched():
    rng = np.random.default_rng(2)
    th = rng.uniform(-2.0, 2.0, (50, 3))
    back = rotation_vector(rotation_matrix(th))
    np.testing.assert_allclose(back, th, atol=1e-12)
