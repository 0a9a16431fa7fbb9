"""Geometrically nonlinear cable dynamics on a beam-element centerline.

Each 2-node element carries a linear shear-deformable (Timoshenko) core
evaluated in a corotated frame extracted from the current nodal positions
and rotations, so arbitrarily large rigid motions produce exactly zero
internal force while local strains stay small.  Explicit central-difference
and implicit midpoint time integrators operate on the same force routine;
rotational states are rotation vectors advanced by incremental composition.
"""

import dataclasses
import logging

import numpy as np
import scipy.linalg

from .errors import StepError
from .rotation import (
    compose_rotation,
    rotation_between,
    rotation_between_batch,
    rotation_matrix,
    rotation_vector,
)

log = logging.getLogger(__name__)


def _timoshenko_stiffness(EA, EIy, EIz, GJ, GAs, L):
    """12x12 local stiffness, DOF order [uA, thetaA, uB, thetaB].

    Shear flexibility enters through Phi = 12 EI / (GAs L^2); Phi -> 0
    recovers the slender (Euler-Bernoulli) limit.
    """
    K = np.zeros((12, 12))
    K[0, 0] = K[6, 6] = EA / L
    K[0, 6] = K[6, 0] = -EA / L
    K[3, 3] = K[9, 9] = GJ / L
    K[3, 9] = K[9, 3] = -GJ / L

    def bend(EI, sign):
        phi = 12.0 * EI / (GAs * L * L)
        c = EI / ((1.0 + phi) * L**3)
        s = sign * 6.0 * L * c
        return np.array(
            [
                [12.0 * c, s, -12.0 * c, s],
                [s, (4.0 + phi) * L * L * c, -s, (2.0 - phi) * L * L * c],
                [-12.0 * c, -s, 12.0 * c, -s],
                [s, (2.0 - phi) * L * L * c, -s, (4.0 + phi) * L * L * c],
            ]
        )

    for dofs, EI, sign in (((1, 5, 7, 11), EIz, 1.0), ((2, 4, 8, 10), EIy, -1.0)):
        kb = bend(EI, sign)
        for a, da in enumerate(dofs):
            for b, db in enumerate(dofs):
                K[da, db] = kb[a, b]
    return K


def _parse_bc(bc, n):
    """Fixity table from 'pin:<node>' / 'clamp:<node>' entries.

    Node designators are integer ids or the aliases 'first' and 'last'.
    Pins fix the three translations, clamps all six DOFs.
    """
    fixed = np.zeros((n, 6), dtype=bool)
    for item in bc:
        try:
            kind, where = str(item).strip().split(":")
        except ValueError:
            raise ValueError(f"bad boundary condition {item!r}: expected kind:node")
        node = {"first": 0, "last": n - 1}.get(where)
        if node is None:
            node = int(where)
        if not 0 <= node < n:
            raise ValueError(f"boundary condition node {node} out of range")
        if kind == "pin":
            fixed[node, :3] = True
        elif kind == "clamp":
            fixed[node, :] = True
        else:
            raise ValueError(f"unknown boundary condition kind {kind!r}")
    return fixed


class CableModel:
    """Reference geometry, section constants and cached element operators.

    Parameters
    ----------
    points : array (n, 3)
        Reference centerline; consecutive points form the elements.
    EA, GJ : float
        Axial and torsional stiffness.
    EI : float or (float, float)
        Bending stiffness about the two principal axes.
    GA_s : float, optional
        Shear stiffness; defaults to the solid-circular-section value
        GJ*EA/(2*EI) implied by the other constants.
    m_L : float
        Mass per unit length.
    rotary_inertia : float
        Rotary inertia per unit length (isotropic nodal lumping, so the
        lumped gyroscopic term vanishes identically).
    bc : iterable of str
        'pin:first', 'clamp:3', ... (see _parse_bc).
    damping_alpha : float
        Mass-proportional damping coefficient (default none).
    consistent_mass : bool
        Use the consistent translational/rotary mass for the implicit
        stepper and the eigensolver; the explicit path always lumps.
    """

    def __init__(
        self,
        points,
        *,
        EA,
        EI,
        GJ,
        m_L,
        rotary_inertia,
        GA_s=None,
        bc=(),
        damping_alpha=0.0,
        consistent_mass=False,
        newton_tol=1e-10,
        newton_maxiter=25,
    ):
        self.points = np.asarray(points, dtype=float)
        n = len(self.points)
        if n < 2:
            raise ValueError("cable needs at least two nodes")
        EIy, EIz = (EI, EI) if np.isscalar(EI) else EI
        if min(EA, EIy, EIz, GJ) <= 0.0 or m_L <= 0.0 or rotary_inertia <= 0.0:
            raise ValueError("section constants, m_L and rotary inertia must be positive")
        if GA_s is None:
            GA_s = GJ * EA / (EIy + EIz)
        self.EA, self.EIy, self.EIz, self.GJ, self.GA_s = EA, EIy, EIz, GJ, GA_s
        self.m_L = m_L
        self.rotary_inertia = rotary_inertia
        self.damping_alpha = damping_alpha
        self.consistent_mass = consistent_mass
        self.newton_tol = newton_tol
        self.newton_maxiter = newton_maxiter

        self.elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        seg = self.points[1:] - self.points[:-1]
        self.lengths = np.linalg.norm(seg, axis=1)
        if np.any(self.lengths <= 0.0):
            raise ValueError("repeated centerline points")
        self.fixed = _parse_bc(bc, n)

        # reference element triads: columns [axis, normal, binormal], the
        # normal parallel-transported so the frame does not spin
        t = seg / self.lengths[:, None]
        a0 = np.zeros(3)
        a0[np.argmin(np.abs(t[0]))] = 1.0
        nrm = np.cross(t[0], a0)
        nrm /= np.linalg.norm(nrm)
        triads = np.empty((n - 1, 3, 3))
        for e in range(n - 1):
            if e > 0:
                nrm = rotation_between(t[e - 1], t[e]) @ nrm
                nrm -= np.dot(nrm, t[e]) * t[e]
                nrm /= np.linalg.norm(nrm)
            triads[e] = np.column_stack([t[e], nrm, np.cross(t[e], nrm)])
        self.triads = triads

        self.k_local = np.stack(
            [_timoshenko_stiffness(EA, EIy, EIz, GJ, GA_s, L) for L in self.lengths]
        )
        self._k_ref = None
        self._dt_limit = None

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def free(self):
        """Flattened free-DOF mask (node-major [u, theta])."""
        return ~self.fixed.reshape(-1)

    def lumped_mass(self):
        """Per-node translational mass and rotary inertia, shape (n, 2)."""
        out = np.zeros((self.n_nodes, 2))
        half = 0.5 * self.lengths
        np.add.at(out[:, 0], self.elements[:, 0], self.m_L * half)
        np.add.at(out[:, 0], self.elements[:, 1], self.m_L * half)
        np.add.at(out[:, 1], self.elements[:, 0], self.rotary_inertia * half)
        np.add.at(out[:, 1], self.elements[:, 1], self.rotary_inertia * half)
        return out

    def mass_matrix(self):
        """Dense (6n, 6n) mass; lumped or consistent per the model flag."""
        n = self.n_nodes
        M = np.zeros((6 * n, 6 * n))
        if not self.consistent_mass:
            d = np.repeat(self.lumped_mass(), 3, axis=1).reshape(-1)
            np.fill_diagonal(M, d)
            return M
        for e, (a, b) in enumerate(self.elements):
            L = self.lengths[e]
            for density, off in ((self.m_L, 0), (self.rotary_inertia, 3)):
                blk = density * L / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
                for (p, q), m in np.ndenumerate(blk):
                    i = 6 * (a if p == 0 else b) + off
                    j = 6 * (a if q == 0 else b) + off
                    M[i : i + 3, j : j + 3] += m * np.eye(3)
        return M

    def linear_stiffness(self):
        """Assembled tangent at the reference configuration, (6n, 6n)."""
        if self._k_ref is None:
            n = self.n_nodes
            K = np.zeros((6 * n, 6 * n))
            for e, (a, b) in enumerate(self.elements):
                E = self.triads[e]
                G = np.zeros((12, 12))
                for blk in range(4):
                    G[3 * blk : 3 * blk + 3, 3 * blk : 3 * blk + 3] = E
                Kg = G @ self.k_local[e] @ G.T
                dofs = np.r_[6 * a : 6 * a + 6, 6 * b : 6 * b + 6]
                K[np.ix_(dofs, dofs)] += Kg
            self._k_ref = K
        return self._k_ref

    def stable_timestep(self):
        """2/omega_max from power iteration on the lumped linearized system."""
        if self._dt_limit is None:
            free = self.free
            if not free.any():
                self._dt_limit = np.inf
                return self._dt_limit
            K = self.linear_stiffness()[np.ix_(free, free)]
            m = np.repeat(self.lumped_mass(), 3, axis=1).reshape(-1)[free]
            x = 1.0 + 0.01 * np.arange(K.shape[0])
            for _ in range(100):
                y = (K @ x) / m
                nrm = np.linalg.norm(y)
                if nrm == 0.0:
                    break
                x = y / nrm
            lam = (x @ (K @ x)) / (x @ (m * x))
            self._dt_limit = 2.0 / np.sqrt(max(lam, 1e-300))
        return self._dt_limit


@dataclasses.dataclass
class CableState:
    """Nodal kinematics: displacement, rotation vector, their rates."""

    u: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    t: float = 0.0

    def copy(self):
        return CableState(
            self.u.copy(), self.theta.copy(), self.v.copy(), self.omega.copy(), self.t
        )


def zero_state(model):
    n = model.n_nodes
    z = np.zeros((n, 3))
    return CableState(z.copy(), z.copy(), z.copy(), z.copy(), 0.0)


def assemble_internal_forces(model, state):
    """Generalized internal forces (n, 6): corotated linear element cores.

    Per element the mean nodal rotation, re-aimed at the current axis,
    defines the corotated frame; deformational DOFs measured in it feed
    the local stiffness and the result rotates back.  Rigid states map to
    exactly zero local DOFs, hence zero force.
    """
    el = model.elements
    a, b = el[:, 0], el[:, 1]
    xA = model.points[a] + state.u[a]
    xB = model.points[b] + state.u[b]
    d = xB - xA
    l = np.linalg.norm(d, axis=1)
    if np.any(l < 1e-6 * model.lengths):
        e = int(np.argmax(l / model.lengths < 1e-6))
        raise StepError(f"cable element {e} collapsed (length ratio {l[e] / model.lengths[e]:.2e})")
    t1 = d / l[:, None]

    RA = rotation_matrix(state.theta[a])
    RB = rotation_matrix(state.theta[b])
    phi = rotation_vector(np.matmul(np.swapaxes(RA, 1, 2), RB))
    Rm = RA @ rotation_matrix(0.5 * phi)
    RmE = Rm @ model.triads
    T = rotation_between_batch(RmE[:, :, 0], t1) @ RmE

    Tt = np.swapaxes(T, 1, 2)
    psiA = rotation_vector(Tt @ (RA @ model.triads))
    psiB = rotation_vector(Tt @ (RB @ model.triads))

    d_loc = np.zeros((len(el), 12))
    d_loc[:, 3:6] = psiA
    d_loc[:, 6] = l - model.lengths
    d_loc[:, 9:12] = psiB
    f_loc = np.einsum("eij,ej->ei", model.k_local, d_loc)

    F = np.zeros((model.n_nodes, 6))
    blocks = [np.einsum("eij,ej->ei", T, f_loc[:, 3 * k : 3 * k + 3]) for k in range(4)]
    np.add.at(F, a, np.concatenate(blocks[0:2], axis=1))
    np.add.at(F, b, np.concatenate(blocks[2:4], axis=1))
    return F


def _check_finite(arrs):
    for x in arrs:
        if not np.all(np.isfinite(x)):
            raise StepError("cable state diverged (non-finite entries)")


def step_central_difference(model, state, f_ext, dt):
    """Explicit step (velocity-Verlet form of central difference).

    Rotational DOFs advance by composing the incremental rotation
    dt*omega onto the accumulated rotation vector.  Fixed DOFs stay
    pinned to zero.  Emits a warning when dt exceeds the linearized
    stability estimate.
    """
    limit = model.stable_timestep()
    if dt > limit:
        log.warning("central difference dt=%.3e above stability estimate %.3e", dt, limit)
    if f_ext is None:
        f_ext = np.zeros((model.n_nodes, 6))
    lm = model.lumped_mass()
    minv = 1.0 / np.repeat(lm, 3, axis=1).reshape(model.n_nodes, 6)
    fixed = model.fixed
    alpha = model.damping_alpha

    def accel(u, theta, vel):
        s = CableState(u, theta, None, None)
        f = f_ext - assemble_internal_forces(model, s)
        if alpha:
            f = f - alpha * vel / minv
        acc = f * minv
        acc[fixed] = 0.0
        return acc

    vel = np.concatenate([state.v, state.omega], axis=1)
    acc = accel(state.u, state.theta, vel)
    v_half = vel + 0.5 * dt * acc
    v_half[fixed] = 0.0

    u_new = state.u + dt * v_half[:, :3]
    theta_new = compose_rotation(dt * v_half[:, 3:], state.theta)
    u_new[fixed[:, :3]] = 0.0
    theta_new[fixed[:, 3:]] = 0.0

    acc = accel(u_new, theta_new, v_half)
    v_new = v_half + 0.5 * dt * acc
    v_new[fixed] = 0.0
    _check_finite((u_new, theta_new, v_new))
    return CableState(u_new, theta_new, v_new[:, :3].copy(), v_new[:, 3:].copy(), state.t + dt)


def step_midpoint(model, state, f_ext, dt):
    """Implicit midpoint step solved by a modified Newton iteration.

    Increments are additive on the rotation vector within the step; the
    Jacobian pairs the exact inertia block with the reference tangent, so
    convergence is quadratic in the linear regime and robust for the
    small per-step rotations the coupling loop produces.
    """
    if f_ext is None:
        f_ext = np.zeros((model.n_nodes, 6))
    n = model.n_nodes
    free = model.free
    M = model.mass_matrix()
    K = model.linear_stiffness()
    J = (2.0 / dt**2) * M + 0.5 * K
    if model.damping_alpha:
        J = J + (model.damping_alpha / dt) * M
    lu = scipy.linalg.lu_factor(J[np.ix_(free, free)])

    vel0 = np.concatenate([state.v, state.omega], axis=1).reshape(-1)
    x = np.zeros(6 * n)  # increment of [u, theta] per node

    res_norm = np.inf
    res0 = prev = None
    for _ in range(model.newton_maxiter):
        u_mid = state.u + 0.5 * x.reshape(n, 6)[:, :3]
        th_mid = state.theta + 0.5 * x.reshape(n, 6)[:, 3:]
        f_int = assemble_internal_forces(model, CableState(u_mid, th_mid, None, None))
        inertia = (2.0 / dt**2) * (M @ (x - dt * vel0))
        r = inertia + f_int.reshape(-1) - f_ext.reshape(-1)
        if model.damping_alpha:
            r = r + model.damping_alpha * (M @ (x / dt))
        r = r[free]
        res_norm = np.linalg.norm(r)
        if res0 is None:
            res0 = res_norm
        scale = max(np.linalg.norm(f_ext), np.linalg.norm(inertia[free]), res0, 1e-30)
        if res_norm <= model.newton_tol * scale + 1e-300:
            break
        # accept stagnation at the force-evaluation rounding floor
        if prev is not None and res_norm > 0.5 * prev and res_norm <= 1e-5 * res0:
            break
        prev = res_norm
        dx = scipy.linalg.lu_solve(lu, -r)
        x[free] += dx
    else:
        raise StepError("midpoint Newton did not converge", residual=float(res_norm))

    inc = x.reshape(n, 6)
    u_new = state.u + inc[:, :3]
    theta_new = state.theta + inc[:, 3:]
    v_new = 2.0 * inc[:, :3] / dt - state.v
    w_new = 2.0 * inc[:, 3:] / dt - state.omega
    u_new[model.fixed[:, :3]] = 0.0
    theta_new[model.fixed[:, 3:]] = 0.0
    v_new[model.fixed[:, :3]] = 0.0
    w_new[model.fixed[:, 3:]] = 0.0
    _check_finite((u_new, theta_new, v_new, w_new))
    return CableState(u_new, theta_new, v_new, w_new, state.t + dt)


def interpolate_at_point(model, state, element, s):
    """Kinematics at parametric point s of an element: (u, theta, v, omega).

    All four fields interpolate with the linear shape functions, the same
    pair used when distributing interface loads back to the nodes.
    """
    if not 0 <= element < model.n_elements:
        raise IndexError(f"element id {element} out of range")
    if not -1e-12 <= s <= 1.0 + 1e-12:
        raise ValueError(f"parametric coordinate {s} outside [0, 1]")
    a, b = model.elements[element]
    w = float(s)
    out = []
    for field in (state.u, state.theta, state.v, state.omega):
        out.append((1.0 - w) * field[a] + w * field[b])
    return tuple(out)


def interpolate_many(model, state, elements, s):
    """Batched interpolate_at_point over index/coordinate arrays."""
    elements = np.asarray(elements, dtype=np.int64)
    s = np.asarray(s, dtype=float)[:, None]
    a = model.elements[elements, 0]
    b = model.elements[elements, 1]
    return tuple(
        (1.0 - s) * field[a] + s * field[b]
        for field in (state.u, state.theta, state.v, state.omega)
    )


def natural_frequencies(model, count):
    """Lowest natural frequencies (Hz) of the linearized free system."""
    free = model.free
    K = model.linear_stiffness()[np.ix_(free, free)]
    M = model.mass_matrix()[np.ix_(free, free)]
    if np.any(np.diag(M) <= 0.0):
        raise ValueError("singular mass matrix")
    count = min(count, K.shape[0])
    lam = scipy.linalg.eigh(K, M, eigvals_only=True, subset_by_index=[0, count - 1])
    return np.sqrt(np.clip(lam, 0.0, None)) / (2.0 * np.pi)
