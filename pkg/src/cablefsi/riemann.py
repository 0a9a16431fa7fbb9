"""Riemann machinery for a perfect gas.

Provides the 1D exact two-state Riemann solver (Newton iteration on the
star pressure plus a self-similar sampler), the one-sided fluid--structure
half-Riemann problem used at embedded walls (closed-form shock /
rarefaction branches), and an entropy-fixed Roe numerical flux in three
dimensions.  All flux routines broadcast over leading array dimensions.
"""

import dataclasses

import numpy as np

from .errors import StepError, VacuumError


@dataclasses.dataclass
class GasModel:
    """Perfect gas with Sutherland viscosity.

    Attributes
    ----------
    gamma : float
        Ratio of specific heats.
    gas_constant : float
        Specific gas constant R in J/(kg K).
    mu0, t0 : float
        Sutherland coefficients: mu(T) = mu0 T^1.5 / (T + t0).  ``mu0 = 0``
        turns all diffusive physics off.
    prandtl : float
        Constant Prandtl number linking conductivity to viscosity.
    """

    gamma: float = 1.4
    gas_constant: float = 287.05
    mu0: float = 0.0
    t0: float = 110.6
    prandtl: float = 0.72

    def __post_init__(self):
        if not 1.0 < self.gamma < 3.0:
            raise ValueError(f"gamma out of range: {self.gamma}")
        if self.gas_constant <= 0.0:
            raise ValueError("gas constant must be positive")

    def sound_speed(self, rho, p):
        return np.sqrt(self.gamma * p / rho)

    def temperature(self, rho, p):
        return p / (rho * self.gas_constant)

    def viscosity(self, T):
        """Sutherland law mu(T) = mu0 T^{3/2} / (T + t0)."""
        T = np.asarray(T, dtype=float)
        return self.mu0 * T * np.sqrt(T) / (T + self.t0)

    def conductivity(self, T):
        """Thermal conductivity from constant Prandtl: k = cp mu / Pr."""
        cp = self.gamma * self.gas_constant / (self.gamma - 1.0)
        return cp * self.viscosity(T) / self.prandtl

    @property
    def viscous(self):
        return self.mu0 > 0.0


@dataclasses.dataclass
class PrimitiveState:
    """1D primitive state (density, normal velocity, pressure)."""

    rho: float
    v: float
    p: float

    def __post_init__(self):
        if self.rho <= 0.0 or self.p <= 0.0:
            raise ValueError(f"non-physical state rho={self.rho} p={self.p}")


# ---------------------------------------------------------------------------
# conservative <-> primitive conversion and physical flux


def primitive_to_conservative(w, gamma):
    """(rho, u, v, w, p) -> (rho, rho u, rho v, rho w, rho E)."""
    w = np.asarray(w, dtype=float)
    U = np.empty_like(w)
    rho = w[..., 0]
    U[..., 0] = rho
    U[..., 1:4] = rho[..., None] * w[..., 1:4]
    ke = 0.5 * np.sum(w[..., 1:4] ** 2, axis=-1)
    U[..., 4] = w[..., 4] / (gamma - 1.0) + rho * ke
    return U


def conservative_to_primitive(U, gamma):
    """(rho, rho u, rho v, rho w, rho E) -> (rho, u, v, w, p)."""
    U = np.asarray(U, dtype=float)
    w = np.empty_like(U)
    rho = U[..., 0]
    w[..., 0] = rho
    w[..., 1:4] = U[..., 1:4] / rho[..., None]
    ke = 0.5 * np.sum(w[..., 1:4] ** 2, axis=-1)
    w[..., 4] = (gamma - 1.0) * (U[..., 4] - rho * ke)
    return w


def euler_flux(w, nu, gamma):
    """Physical Euler flux of primitive state(s) w through unit normal(s) nu."""
    w = np.asarray(w, dtype=float)
    nu = np.asarray(nu, dtype=float)
    rho, p = w[..., 0], w[..., 4]
    vel = w[..., 1:4]
    vn = np.sum(vel * nu, axis=-1)
    E = p / (gamma - 1.0) + 0.5 * rho * np.sum(vel * vel, axis=-1)
    F = np.empty_like(w)
    F[..., 0] = rho * vn
    F[..., 1:4] = rho[..., None] * vel * vn[..., None] + p[..., None] * nu
    F[..., 4] = (E + p) * vn
    return F


# ---------------------------------------------------------------------------
# half-Riemann problem at a moving impermeable wall


def solve_half_riemann(rho, vn, p, wall_vn, gas):
    """Star state of the one-sided wall Riemann problem.

    The fluid occupies the half line xi > 0 with uniform state
    (rho, vn, p); the wall sits at xi = 0 and moves with normal velocity
    ``wall_vn``.  A receding wall (wall_vn < vn) launches an isentropic
    rarefaction into the fluid, an advancing wall a shock satisfying the
    Rankine-Hugoniot piston relations.  The wall velocity is taken constant
    over the step.

    Parameters
    ----------
    rho, vn, p : float or array
        Fluid state projected on the wall normal (normal points from the
        wall into the fluid).
    wall_vn : float or array
        Wall velocity along the same normal.
    gas : GasModel

    Returns
    -------
    (rho_star, p_star) : floats or arrays
        Fluid state at the wall after the wave departs.

    Raises
    ------
    VacuumError
        If the wall recedes faster than vn - 2c/(gamma-1).
    """
    rho = np.asarray(rho, dtype=float)
    vn = np.asarray(vn, dtype=float)
    p = np.asarray(p, dtype=float)
    wall_vn = np.asarray(wall_vn, dtype=float)
    g = gas.gamma

    c = np.sqrt(g * p / rho)
    dv = wall_vn - vn  # piston velocity relative to the fluid

    # rarefaction branch: isentropic expansion, valid until vacuum
    arg = 1.0 + 0.5 * (g - 1.0) * dv / c
    if np.any(arg <= 0.0):
        vmin = vn - 2.0 * c / (g - 1.0)
        worst = np.min(arg)
        raise VacuumError(
            "wall recedes past the vacuum limit: wall velocity must stay above "
            f"vn - 2c/(gamma-1) = {np.atleast_1d(vmin)[np.argmin(np.atleast_1d(arg))]:.6g}"
        )
    p_rare = p * arg ** (2.0 * g / (g - 1.0))
    rho_rare = rho * (p_rare / p) ** (1.0 / g)

    # shock branch: solve the piston quadratic from the Rankine-Hugoniot
    # relations, (p* - p)^2 A = dv^2 (p* + B); the discriminant is written in
    # factored form to avoid cancellation at small piston velocities
    A = 2.0 / ((g + 1.0) * rho)
    B = (g - 1.0) / (g + 1.0) * p
    disc = dv * dv * (4.0 * A * (p + B) + dv * dv)
    p_shock = (2.0 * A * p + dv * dv + np.sqrt(disc)) / (2.0 * A)
    G = (g - 1.0) / (g + 1.0)
    ratio = p_shock / p
    rho_shock = rho * (ratio + G) / (G * ratio + 1.0)

    compress = dv > 0.0
    p_star = np.where(compress, p_shock, p_rare)
    rho_star = np.where(compress, rho_shock, rho_rare)
    if p_star.ndim == 0:
        return float(rho_star), float(p_star)
    return rho_star, p_star


# ---------------------------------------------------------------------------
# exact two-state Riemann solver


@dataclasses.dataclass
class RiemannSolution:
    """Star region and self-similar sampler of an exact Riemann solution."""

    left: PrimitiveState
    right: PrimitiveState
    gamma: float
    p_star: float
    u_star: float
    rho_star_left: float
    rho_star_right: float

    def sample(self, xi):
        """State (rho, v, p) along rays x/t = xi.

        Parameters
        ----------
        xi : float or array
            Similarity coordinate(s).

        Returns
        -------
        tuple of arrays (rho, v, p), shaped like xi.
        """
        xi = np.asarray(xi, dtype=float)
        rho = np.empty_like(xi)
        v = np.empty_like(xi)
        p = np.empty_like(xi)
        it = np.nditer(xi, flags=["multi_index"])
        for x in it:
            r_, v_, p_ = self._sample_one(float(x))
            rho[it.multi_index] = r_
            v[it.multi_index] = v_
            p[it.multi_index] = p_
        return rho, v, p

    def _sample_one(self, xi):
        g = self.gamma
        gm, gp = g - 1.0, g + 1.0
        if xi <= self.u_star:
            # left of the contact
            w = self.left
            c = np.sqrt(g * w.p / w.rho)
            if self.p_star > w.p:  # left shock
                S = w.v - c * np.sqrt(0.5 * gp / g * self.p_star / w.p + 0.5 * gm / g)
                if xi <= S:
                    return w.rho, w.v, w.p
                return self.rho_star_left, self.u_star, self.p_star
            c_star = c * (self.p_star / w.p) ** (0.5 * gm / g)
            head, tail = w.v - c, self.u_star - c_star
            if xi <= head:
                return w.rho, w.v, w.p
            if xi >= tail:
                return self.rho_star_left, self.u_star, self.p_star
            # inside the left fan
            u = (2.0 / gp) * (c + 0.5 * gm * w.v + xi)
            cfan = (2.0 / gp) * (c + 0.5 * gm * (w.v - xi))
            rho = w.rho * (cfan / c) ** (2.0 / gm)
            p = w.p * (cfan / c) ** (2.0 * g / gm)
            return rho, u, p
        # right of the contact
        w = self.right
        c = np.sqrt(g * w.p / w.rho)
        if self.p_star > w.p:  # right shock
            S = w.v + c * np.sqrt(0.5 * gp / g * self.p_star / w.p + 0.5 * gm / g)
            if xi >= S:
                return w.rho, w.v, w.p
            return self.rho_star_right, self.u_star, self.p_star
        c_star = c * (self.p_star / w.p) ** (0.5 * gm / g)
        head, tail = w.v + c, self.u_star + c_star
        if xi >= head:
            return w.rho, w.v, w.p
        if xi <= tail:
            return self.rho_star_right, self.u_star, self.p_star
        u = (2.0 / gp) * (-c + 0.5 * gm * w.v + xi)
        cfan = (2.0 / gp) * (c - 0.5 * gm * (w.v - xi))
        rho = w.rho * (cfan / c) ** (2.0 / gm)
        p = w.p * (cfan / c) ** (2.0 * g / gm)
        return rho, u, p


def _pressure_function(p, w, g):
    """Toro-style f_K(p) and its derivative for one side."""
    c = np.sqrt(g * w.p / w.rho)
    if p > w.p:  # shock
        A = 2.0 / ((g + 1.0) * w.rho)
        B = (g - 1.0) / (g + 1.0) * w.p
        root = np.sqrt(A / (p + B))
        f = (p - w.p) * root
        df = root * (1.0 - 0.5 * (p - w.p) / (p + B))
    else:  # rarefaction
        f = 2.0 * c / (g - 1.0) * ((p / w.p) ** ((g - 1.0) / (2.0 * g)) - 1.0)
        df = (p / w.p) ** (-(g + 1.0) / (2.0 * g)) / (w.rho * c)
    return f, df


def solve_riemann(left, right, gas, tol=1e-12, max_iter=100):
    """Exact solution of the two-state Riemann problem.

    Newton iteration on the star pressure, converged to relative increment
    ``tol``; star densities follow from shock/rarefaction relations on each
    side.

    Parameters
    ----------
    left, right : PrimitiveState
    gas : GasModel

    Returns
    -------
    RiemannSolution

    Raises
    ------
    VacuumError
        For initial data that open a vacuum region.
    StepError
        If the Newton iteration fails to converge.
    """
    g = gas.gamma
    cl = np.sqrt(g * left.p / left.rho)
    cr = np.sqrt(g * right.p / right.rho)
    du = right.v - left.v
    if 2.0 * (cl + cr) / (g - 1.0) <= du:
        raise VacuumError("initial states generate vacuum (pressure positivity lost)")

    # two-rarefaction initial guess, robust over the admissible range
    z = (g - 1.0) / (2.0 * g)
    p = ((cl + cr - 0.5 * (g - 1.0) * du) / (cl / left.p**z + cr / right.p**z)) ** (1.0 / z)
    p = max(p, 1e-12 * min(left.p, right.p))

    for _ in range(max_iter):
        fl, dfl = _pressure_function(p, left, g)
        fr, dfr = _pressure_function(p, right, g)
        dp = (fl + fr + du) / (dfl + dfr)
        p_new = p - dp
        if p_new <= 0.0:
            p_new = 0.5 * p
        if abs(p_new - p) <= tol * p_new:
            p = p_new
            break
        p = p_new
    else:
        raise StepError("star pressure Newton iteration did not converge", residual=abs(dp))

    fl, _ = _pressure_function(p, left, g)
    fr, _ = _pressure_function(p, right, g)
    u_star = 0.5 * (left.v + right.v) + 0.5 * (fr - fl)

    G = (g - 1.0) / (g + 1.0)

    def star_density(w):
        ratio = p / w.p
        if p > w.p:
            return w.rho * (ratio + G) / (G * ratio + 1.0)
        return w.rho * ratio ** (1.0 / g)

    return RiemannSolution(
        left=left,
        right=right,
        gamma=g,
        p_star=p,
        u_star=u_star,
        rho_star_left=star_density(left),
        rho_star_right=star_density(right),
    )


# ---------------------------------------------------------------------------
# Roe flux


def roe_flux(wL, wR, nu, gas, entropy_fix=0.05):
    """Roe approximate Riemann flux with a Harten entropy fix.

    Parameters
    ----------
    wL, wR : array (..., 5)
        Primitive states (rho, u, v, w, p) on the two sides.
    nu : array (..., 3)
        Unit normals; the flux is per unit area through nu.
    gas : GasModel
    entropy_fix : float
        Eigenvalues with magnitude below ``entropy_fix * (|v.nu| + c)`` of
        the Roe average are smoothed quadratically.

    Returns
    -------
    array (..., 5)

    Raises
    ------
    StepError
        If a Roe average has non-positive enthalpy (non-physical inputs).
    """
    g = gas.gamma
    wL = np.asarray(wL, dtype=float)
    wR = np.asarray(wR, dtype=float)
    nu = np.asarray(nu, dtype=float)

    rhoL, pL = wL[..., 0], wL[..., 4]
    rhoR, pR = wR[..., 0], wR[..., 4]
    vL, vR = wL[..., 1:4], wR[..., 1:4]

    HL = g / (g - 1.0) * pL / rhoL + 0.5 * np.sum(vL * vL, axis=-1)
    HR = g / (g - 1.0) * pR / rhoR + 0.5 * np.sum(vR * vR, axis=-1)

    sL = np.sqrt(rhoL)
    sR = np.sqrt(rhoR)
    wsum = sL + sR
    v = (sL[..., None] * vL + sR[..., None] * vR) / wsum[..., None]
    H = (sL * HL + sR * HR) / wsum
    q2 = np.sum(v * v, axis=-1)
    c2 = (g - 1.0) * (H - 0.5 * q2)
    if np.any(c2 <= 0.0):
        raise StepError("non-physical Roe average (negative enthalpy)")
    c = np.sqrt(c2)
    vn = np.sum(v * nu, axis=-1)

    drho = rhoR - rhoL
    dp = pR - pL
    dv = vR - vL
    dvn = np.sum(dv * nu, axis=-1)

    # wave strengths: acoustic pair, entropy wave, shear lumped into one carrier
    rho_avg = np.sqrt(rhoL * rhoR)
    alpha_minus = (dp - rho_avg * c * dvn) / (2.0 * c2)
    alpha_plus = (dp + rho_avg * c * dvn) / (2.0 * c2)
    alpha_0 = drho - dp / c2

    lam_minus = vn - c
    lam_plus = vn + c
    lam_0 = vn

    delta = entropy_fix * (np.abs(vn) + c)

    def fixed_abs(lam):
        a = np.abs(lam)
        return np.where(a < delta, (lam * lam + delta * delta) / (2.0 * delta), a)

    am = fixed_abs(lam_minus)
    ap = fixed_abs(lam_plus)
    a0 = fixed_abs(lam_0)

    shape = wL.shape
    diss = np.zeros(shape)

    # acoustic waves
    r_minus = np.empty(shape)
    r_minus[..., 0] = 1.0
    r_minus[..., 1:4] = v - c[..., None] * nu
    r_minus[..., 4] = H - c * vn
    r_plus = np.empty(shape)
    r_plus[..., 0] = 1.0
    r_plus[..., 1:4] = v + c[..., None] * nu
    r_plus[..., 4] = H + c * vn
    diss += (am * alpha_minus)[..., None] * r_minus
    diss += (ap * alpha_plus)[..., None] * r_plus

    # entropy wave
    r0 = np.empty(shape)
    r0[..., 0] = 1.0
    r0[..., 1:4] = v
    r0[..., 4] = 0.5 * q2
    diss += (a0 * alpha_0)[..., None] * r0

    # shear waves: momentum/energy carried by the tangential velocity jump
    dv_t = dv - dvn[..., None] * nu
    shear = np.zeros(shape)
    shear[..., 1:4] = rho_avg[..., None] * dv_t
    shear[..., 4] = rho_avg * np.sum(v * dv_t, axis=-1)
    diss += a0[..., None] * shear

    FL = euler_flux(wL, nu, g)
    FR = euler_flux(wR, nu, g)
    return 0.5 * (FL + FR) - 0.5 * diss
