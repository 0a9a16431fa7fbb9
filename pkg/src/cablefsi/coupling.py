"""Master-slave transfer between the cable centerline and its surface.

Every node of the embedded surface is a slave rigidly attached to a master
point on the cable centerline (one master per cross-section).  Motion flows
from the finite-element cable to the surface through the rigid-offset map,
and aerodynamic loads flow back as force/moment resultants at the masters,
then to the FE nodes through the element shape functions.  The transfer is
globally conservative: the virtual work of the slave forces equals the
virtual work of the distributed nodal loads for any virtual cable motion.
"""

import dataclasses
import logging

import numpy as np

from .cable import interpolate_many
from .errors import GeometryError
from .rotation import rotation_matrix

log = logging.getLogger(__name__)


@dataclasses.dataclass
class Pairing:
    """Immutable slave-to-master map built from reference geometry.

    Attributes
    ----------
    section : array (S,) int
        Master (cross-section) index of each slave node.
    element : array (S,) int
        Cable element containing the master point of each slave.
    s : array (S,)
        Parametric coordinate of the master point inside its element.
    d : array (S, 3)
        Reference offset from master to slave; constant in time.
    section_element, section_s : arrays (M,), (M,)
        One master per section: its host element and coordinate.
    master_ref : array (M, 3)
        Reference positions of the master points.
    """

    section: np.ndarray
    element: np.ndarray
    s: np.ndarray
    d: np.ndarray
    section_element: np.ndarray
    section_s: np.ndarray
    master_ref: np.ndarray

    @property
    def n_slaves(self):
        return len(self.section)

    @property
    def n_masters(self):
        return len(self.section_element)


@dataclasses.dataclass
class MasterLoads:
    """Force and moment resultants at the master points."""

    force: np.ndarray
    moment: np.ndarray


def pair_slaves(surface, model):
    """Pair every surface node with the closest point of the cable.

    The master point of a cross-section is the closest-point projection of
    the section centroid onto the cable polyline (sections are built around
    centerline knots, so the centroid sits on the centerline and each master
    coincides with its knot whenever the knot lies on the cable).  Offsets
    d = x0_slave - x0_master are stored once from reference positions and
    never updated.

    Parameters
    ----------
    surface : EmbeddedSurface
    model : CableModel

    Returns
    -------
    Pairing

    Raises
    ------
    GeometryError
        If any section carries fewer than three slave nodes.
    """
    for i, sec in enumerate(surface.sections):
        if len(sec) < 3:
            raise GeometryError(f"section {i} has {len(sec)} slaves, need at least 3")

    centroids = np.array([surface.ref_positions[sec].mean(axis=0) for sec in surface.sections])
    pa = model.points[model.elements[:, 0]]
    pb = model.points[model.elements[:, 1]]
    axis = pb - pa
    len2 = np.einsum("ij,ij->i", axis, axis)

    # closest point on each element, clamped to the segment
    t = np.einsum("mej,ej->me", centroids[:, None, :] - pa[None, :, :], axis) / len2
    t = np.clip(t, 0.0, 1.0)
    foot = pa[None, :, :] + t[:, :, None] * axis[None, :, :]
    gap = centroids[:, None, :] - foot
    dist2 = np.einsum("mej,mej->me", gap, gap)

    # equidistant projections (shared node between two elements) resolve to
    # the lower element id
    d2min = dist2.min(axis=1)
    diag2 = float(np.einsum("i->", (model.points.max(axis=0) - model.points.min(axis=0)) ** 2))
    near = dist2 <= d2min[:, None] + 1e-9 * d2min[:, None] + 1e-24 * max(diag2, 1e-300)
    elem = near.argmax(axis=1)
    ties = np.flatnonzero(near.sum(axis=1) > 1)
    if len(ties):
        log.debug("pairing tie-break to lower element id for %d sections: %s", len(ties), ties)

    rows = np.arange(len(centroids))
    sec_s = t[rows, elem]
    master = foot[rows, elem]

    section = surface.section_of_node.copy()
    return Pairing(
        section=section,
        element=elem[section],
        s=sec_s[section],
        d=surface.ref_positions - master[section],
        section_element=elem,
        section_s=sec_s,
        master_ref=master,
    )


def _master_kinematics(pairing, model, state):
    """Interpolated (u, theta, v, omega) at every master point."""
    return interpolate_many(model, state, pairing.section_element, pairing.section_s)


def _rotated_offsets(pairing, theta_m):
    """R(theta_M) d for every slave, using its master's rotation."""
    R = rotation_matrix(theta_m)
    return np.einsum("sij,sj->si", R[pairing.section], pairing.d)


def update_surface_motion(surface, pairing, model, state):
    """Slave the surface to the current cable state.

    u_S = u_M + R(theta_M) d - d and udot_S = udot_M + omega_M x R(theta_M) d;
    the surface displacement/velocity arrays are overwritten in place and its
    motion caches invalidated.

    Returns
    -------
    (u_S, v_S) : arrays (S, 3)
    """
    if pairing.n_slaves != surface.n_nodes:
        raise ValueError("pairing does not match surface size")
    u_m, th_m, v_m, om_m = _master_kinematics(pairing, model, state)
    rd = _rotated_offsets(pairing, th_m)
    sec = pairing.section
    u_s = u_m[sec] + rd - pairing.d
    v_s = v_m[sec] + np.cross(om_m[sec], rd)
    surface.displacements[:] = u_s
    surface.velocities[:] = v_s
    surface.invalidate_motion_caches()
    return u_s, v_s


def aggregate_loads(slave_forces, pairing, model, state):
    """Sum slave forces into master resultants.

    f_M = sum_j f_S^j and m_M = sum_j (R(theta_M) d^j) x f_S^j with the
    current rotation at each master.
    """
    f_s = np.asarray(slave_forces, dtype=float)
    if f_s.shape != (pairing.n_slaves, 3):
        raise ValueError(f"expected slave forces of shape {(pairing.n_slaves, 3)}, got {f_s.shape}")
    _, th_m, _, _ = _master_kinematics(pairing, model, state)
    rd = _rotated_offsets(pairing, th_m)
    force = np.zeros((pairing.n_masters, 3))
    moment = np.zeros((pairing.n_masters, 3))
    np.add.at(force, pairing.section, f_s)
    np.add.at(moment, pairing.section, np.cross(rd, f_s))
    return MasterLoads(force=force, moment=moment)


def distribute_loads(loads, pairing, model):
    """Spread master loads to the FE nodes with the linear shape functions.

    Both translational and rotational loads use the same pair of linear
    shape functions, so the nodal forces of each master sum back to f_M
    exactly (partition of unity).

    Returns
    -------
    (f_N, m_N) : arrays (n_nodes, 3)
    """
    a = model.elements[pairing.section_element, 0]
    b = model.elements[pairing.section_element, 1]
    w = pairing.section_s[:, None]
    f_n = np.zeros((model.n_nodes, 3))
    m_n = np.zeros((model.n_nodes, 3))
    np.add.at(f_n, a, (1.0 - w) * loads.force)
    np.add.at(f_n, b, w * loads.force)
    np.add.at(m_n, a, (1.0 - w) * loads.moment)
    np.add.at(m_n, b, w * loads.moment)
    return f_n, m_n


def virtual_work_check(slave_forces, pairing, model, state, delta_u, delta_theta):
    """Virtual work of the slave forces vs. the distributed nodal loads.

    delta_u, delta_theta are arbitrary virtual nodal motions of the cable.
    The slave-side work uses the linearized motion transfer
    du_S = du_M + dtheta_M x R(theta_M) d; the structure-side work pairs the
    distributed (f_N, m_N) with the virtual nodal motion.  The two agree to
    rounding for any inputs.

    Returns
    -------
    (dW_F, dW_S) : floats
    """
    f_s = np.asarray(slave_forces, dtype=float)
    delta_u = np.asarray(delta_u, dtype=float)
    delta_theta = np.asarray(delta_theta, dtype=float)

    a = model.elements[pairing.section_element, 0]
    b = model.elements[pairing.section_element, 1]
    w = pairing.section_s[:, None]
    du_m = (1.0 - w) * delta_u[a] + w * delta_u[b]
    dth_m = (1.0 - w) * delta_theta[a] + w * delta_theta[b]

    _, th_m, _, _ = _master_kinematics(pairing, model, state)
    rd = _rotated_offsets(pairing, th_m)
    sec = pairing.section
    du_s = du_m[sec] + np.cross(dth_m[sec], rd)
    dw_f = float(np.sum(f_s * du_s))

    loads = aggregate_loads(f_s, pairing, model, state)
    f_n, m_n = distribute_loads(loads, pairing, model)
    dw_s = float(np.sum(f_n * delta_u) + np.sum(m_n * delta_theta))
    return dw_f, dw_s
