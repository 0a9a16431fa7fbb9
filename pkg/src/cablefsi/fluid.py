"""Vertex-centered compressible flow solver around an embedded surface.

Away from the surface this is a standard second-order finite-volume scheme
on the median dual of a tetrahedral mesh: limited MUSCL reconstruction of
primitive variables and a Roe flux per edge.  Edges cut by the embedded
surface are closed with a wall model instead: the state is reconstructed at
the intersection point, a one-sided wall Riemann problem supplies density
and pressure consistent with the wall's normal velocity, and the resulting
interface state is blended to the dual facet before fluxing.  Diffusive
fluxes assemble element-by-element with per-cell ghost values near the
surface, and wall tractions are sampled at Gauss points shifted one cell
size away from the surface to avoid occluded data.
"""

import dataclasses
import logging

import numpy as np

from .errors import StepError
from .mesh import BOUNDARY_TAGS
from .mesh import least_squares_gradients
from .riemann import (
    conservative_to_primitive,
    primitive_to_conservative,
    roe_flux,
    solve_half_riemann,
)
from .surface import NODE_REAL, classify_occlusion, intersect_edges_batch

log = logging.getLogger(__name__)

# clamp for intersection points sitting nearly on the real endpoint: the
# reconstruction/blending point is pushed to this fraction of the edge
BETA_MIN = 0.1


# ---------------------------------------------------------------------------
# flow state


@dataclasses.dataclass
class FluidState:
    """Conservative nodal flow state.

    Attributes
    ----------
    W : array (n, 5)
        (rho, rho v, rho E) per mesh node.  Entries at occluded (ghost)
        nodes are inactive payload and carry no physical meaning.
    gas : GasModel
    t : float
        Physical time.
    """

    W: np.ndarray
    gas: object
    t: float = 0.0

    def primitive(self):
        return conservative_to_primitive(self.W, self.gas.gamma)

    def copy(self):
        return FluidState(self.W.copy(), self.gas, self.t)


def uniform_state(n_nodes, gas, w):
    """FluidState with the same primitive vector (rho, u, v, w, p) at every node."""
    w = np.asarray(w, dtype=float)
    if w.shape != (5,) or w[0] <= 0.0 or w[4] <= 0.0:
        raise ValueError(f"bad primitive state {w}")
    W = np.tile(primitive_to_conservative(w, gas.gamma), (n_nodes, 1))
    return FluidState(W, gas)


def _positivity_ok(w, mask):
    return bool(np.all(w[mask, 0] > 0.0) and np.all(w[mask, 4] > 0.0))


# ---------------------------------------------------------------------------
# point location


class TetLocator:
    """Uniform-grid point locator over the tetrahedra of a static mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        x = mesh.nodes[mesh.tets]
        lo_t = x.min(axis=1)
        hi_t = x.max(axis=1)
        self.cell = max(float(np.median((hi_t - lo_t).max(axis=1))), 1e-300)
        self.lo = mesh.nodes.min(axis=0)
        ilo = np.floor((lo_t - self.lo) / self.cell).astype(np.int64)
        ihi = np.floor((hi_t - self.lo) / self.cell).astype(np.int64)
        self.bins = {}
        for e in range(mesh.n_tets):
            for i in range(ilo[e, 0], ihi[e, 0] + 1):
                for j in range(ilo[e, 1], ihi[e, 1] + 1):
                    for k in range(ilo[e, 2], ihi[e, 2] + 1):
                        self.bins.setdefault((i, j, k), []).append(e)
        self.bins = {k: np.array(v, dtype=np.int64) for k, v in self.bins.items()}

    def locate(self, points, tol=1e-9):
        """Containing tetrahedron per point, -1 when outside the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(points), -1, dtype=np.int64)
        rows, cands = [], []
        keys = np.floor((points - self.lo) / self.cell).astype(np.int64)
        for r, key in enumerate(map(tuple, keys)):
            c = self.bins.get(key)
            if c is not None:
                rows.append(np.full(len(c), r, dtype=np.int64))
                cands.append(c)
        if not rows:
            return out
        rows = np.concatenate(rows)
        cands = np.concatenate(cands)
        g = self.mesh.p1_gradients()[cands]
        x0 = self.mesh.nodes[self.mesh.tets[cands, 0]]
        lam = np.einsum("kac,kc->ka", g, points[rows] - x0)
        lam[:, 0] += 1.0
        inside = lam.min(axis=1) >= -tol
        # lowest candidate tet wins so ties on shared faces are deterministic
        order = np.lexsort((cands[inside], rows[inside]))
        r_in = rows[inside][order]
        keep = np.ones(len(r_in), dtype=bool)
        keep[1:] = r_in[1:] != r_in[:-1]
        out[r_in[keep]] = cands[inside][order][keep]
        return out


# ---------------------------------------------------------------------------
# embedded-interface metadata


@dataclasses.dataclass
class InterfaceCache:
    """Per-edge wall treatments and mixed-cell bookkeeping for one surface pose.

    One treatment row exists for every (intersected edge, real endpoint)
    pair: a real node whose dual facet on that edge is closed by the wall
    model.  ``xi``/``alpha`` already include the near-endpoint clamp.
    """

    status: np.ndarray
    edge_counts: np.ndarray
    gradient_edge_mask: np.ndarray
    t_node: np.ndarray
    t_other: np.ndarray
    t_edge: np.ndarray
    t_xi: np.ndarray
    t_normal: np.ndarray
    t_wall_v: np.ndarray
    t_alpha: np.ndarray
    t_triangle: np.ndarray
    mixed_tets: np.ndarray
    mixed_real: np.ndarray
    n_beta_clamped: int = 0
    n_missing_hits: int = 0

    @property
    def n_treatments(self):
        return len(self.t_node)

    @property
    def real(self):
        return self.status == NODE_REAL


def build_interface(mesh, surface, debug=False):
    """Classify nodes, collect wall treatments and mixed cells for a surface pose.

    Every edge with at least one intersection and a real endpoint yields
    one treatment per real side, using the hit closest to that side; the
    wall normal is oriented toward the real node and the wall velocity is
    interpolated at the hit from the surface motion.  Real/ghost edges the
    intersection sweep missed (grazing contact) get a synthetic mid-edge
    treatment so the wall stays closed; these are counted and logged.
    """
    status = classify_occlusion(mesh, surface, debug=debug)
    real = status == NODE_REAL
    edges = mesh.edges
    counts, hits = intersect_edges_batch(surface, mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]])

    node_l, other_l, edge_l, xi_l, nrm_l, wv_l, tri_l = [], [], [], [], [], [], []

    def add(row, node, other, hit):
        node_l.append(node)
        other_l.append(other)
        edge_l.append(row)
        xi_l.append(hit.point)
        tri_l.append(hit.triangle)
        d = mesh.nodes[node] - hit.point
        sgn = -1.0 if float(hit.normal @ d) < 0.0 else 1.0
        nrm_l.append(sgn * hit.normal)
        corners = surface.triangles[hit.triangle]
        wv_l.append(hit.bary @ surface.velocities[corners])

    for row in sorted(hits):
        a, b = edges[row]
        row_hits = hits[row]
        if real[a]:
            add(row, a, b, row_hits[0])
        if real[b]:
            add(row, b, a, row_hits[-1])

    # grazing contact: status flips across the edge but no hit was recorded
    missing = np.flatnonzero((real[edges[:, 0]] != real[edges[:, 1]]) & (counts == 0))
    for row in missing:
        a, b = edges[row]
        node, other = (a, b) if real[a] else (b, a)
        mid = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
        d = mesh.nodes[node] - mid
        node_l.append(node)
        other_l.append(other)
        edge_l.append(row)
        xi_l.append(mid)
        tri_l.append(-1)
        nrm_l.append(d / np.linalg.norm(d))
        wv_l.append(np.zeros(3))
    if len(missing):
        log.warning("closed %d real/ghost edges without recorded intersections", len(missing))

    t_node = np.array(node_l, dtype=np.int64).reshape(-1)
    t_other = np.array(other_l, dtype=np.int64).reshape(-1)
    t_edge = np.array(edge_l, dtype=np.int64).reshape(-1)
    t_xi = np.array(xi_l, dtype=float).reshape(-1, 3)
    t_normal = np.array(nrm_l, dtype=float).reshape(-1, 3)
    t_wall_v = np.array(wv_l, dtype=float).reshape(-1, 3)
    t_triangle = np.array(tri_l, dtype=np.int64).reshape(-1)

    n_clamped = 0
    if len(t_node):
        xn = mesh.nodes[t_node]
        xo = mesh.nodes[t_other]
        length = np.linalg.norm(xo - xn, axis=1)
        beta = np.linalg.norm(t_xi - xn, axis=1) / length
        low = beta < BETA_MIN
        n_clamped = int(np.count_nonzero(low))
        if n_clamped:
            t_xi = t_xi.copy()
            t_xi[low] = xn[low] + BETA_MIN * (xo[low] - xn[low])
            log.info("clamped %d near-endpoint intersections to beta=%.2f", n_clamped, BETA_MIN)
        beta_c = np.linalg.norm(t_xi - xn, axis=1) / length
        t_alpha = np.maximum((beta_c - 0.5) / beta_c, 0.0)
    else:
        t_alpha = np.zeros(0)

    ghost_corner = ~real[mesh.tets]
    n_ghost = ghost_corner.sum(axis=1)
    mixed = np.flatnonzero((n_ghost > 0) & (n_ghost < 4))
    occluded = int(np.count_nonzero(n_ghost == 4))
    if occluded:
        log.debug("%d fully occluded cells skipped", occluded)

    grad_mask = (counts == 0) & real[edges[:, 0]] & real[edges[:, 1]]

    return InterfaceCache(
        status=status,
        edge_counts=counts,
        gradient_edge_mask=grad_mask,
        t_node=t_node,
        t_other=t_other,
        t_edge=t_edge,
        t_xi=t_xi,
        t_normal=t_normal,
        t_wall_v=t_wall_v,
        t_alpha=t_alpha,
        t_triangle=t_triangle,
        mixed_tets=mixed,
        mixed_real=~ghost_corner[mixed],
        n_beta_clamped=n_clamped,
        n_missing_hits=len(missing),
    )


def interface_blend_alpha(x_i, x_j, x_int):
    """Facet blending weight of the nodal state against the wall state.

    With the intersection a fraction beta along the edge from the real
    endpoint, the facet midpoint state interpolates linearly between the
    node and the wall, alpha = (beta - 1/2)/beta.  An intersection on the
    near half of the edge puts the facet midpoint behind the wall; the
    blend then floors at the pure wall state (alpha = 0) -- extrapolating
    past it feeds the Roe dissipation an anti-diffusive facet state that
    grows without bound at any time step.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    x_int = np.asarray(x_int, dtype=float)
    beta = np.linalg.norm(x_int - x_i, axis=-1) / np.linalg.norm(x_j - x_i, axis=-1)
    return np.maximum((beta - 0.5) / beta, 0.0)


# ---------------------------------------------------------------------------
# gradients and reconstruction


def compute_gradients(mesh, state, interface=None):
    """Weighted least-squares nodal gradients of the primitive variables.

    Edges crossing the surface and edges touching ghost nodes are excluded,
    so near-wall stencils use same-side neighbors only.  Returns (n, 5, 3).
    """
    mask = None if interface is None else interface.gradient_edge_mask
    return least_squares_gradients(mesh.nodes, mesh.edges, state.primitive(), edge_mask=mask)


def _van_albada(a, b):
    # limited average of the upwind and central slopes; zero at extrema
    ab = a * b
    den = a * a + b * b
    safe = np.where(den > 0.0, den, 1.0)
    return np.where(ab > 0.0, ab * (a + b) / safe, 0.0)


def muscl_edge_states(nodes, edges, w, gradients):
    """Limited second-order edge states (wL, wR) at each edge midpoint.

    The reconstructed values stay within the closed interval of the two
    nodal values componentwise, so positive nodal states reconstruct to
    positive edge states.
    """
    dx = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    b = w[edges[:, 1]] - w[edges[:, 0]]
    gi = np.einsum("ekc,ec->ek", gradients[edges[:, 0]], dx)
    gj = np.einsum("ekc,ec->ek", gradients[edges[:, 1]], dx)
    wL = w[edges[:, 0]] + 0.5 * _van_albada(2.0 * gi - b, b)
    wR = w[edges[:, 1]] - 0.5 * _van_albada(2.0 * gj - b, b)
    return wL, wR


def wall_interface_state(w_int, normal, wall_velocity, gas):
    """Primitive state at a wall point from the one-sided Riemann problem.

    The normal component of the fluid velocity is replaced by the wall's
    normal velocity, the tangential part of the reconstructed velocity is
    kept, and density/pressure come from the wall-normal wave (shock when
    the wall advances into the fluid, rarefaction when it recedes).
    ``normal`` points from the wall into the fluid.
    """
    w_int = np.asarray(w_int, dtype=float)
    normal = np.asarray(normal, dtype=float)
    wall_velocity = np.asarray(wall_velocity, dtype=float)
    vn = np.sum(w_int[..., 1:4] * normal, axis=-1)
    wall_vn = np.sum(wall_velocity * normal, axis=-1)
    rho_s, p_s = solve_half_riemann(w_int[..., 0], vn, w_int[..., 4], wall_vn, gas)
    out = np.array(w_int, copy=True)
    out[..., 0] = rho_s
    out[..., 4] = p_s
    out[..., 1:4] = w_int[..., 1:4] + (wall_vn - vn)[..., None] * normal
    return out


# ---------------------------------------------------------------------------
# convective residual


@dataclasses.dataclass
class FluxTally:
    """Net flux bookkeeping of one residual evaluation.

    ``boundary`` and ``interface`` hold the summed outgoing flux integrals
    through the farfield/slip patches and the embedded-wall facets; interior
    edge fluxes cancel pairwise and never appear here.
    """

    boundary: np.ndarray
    interface: np.ndarray
    first_order_reconstructions: int = 0
    positivity_blends: int = 0

    @property
    def total(self):
        return self.boundary + self.interface


def _farfield_for(farfield, tag_name):
    if isinstance(farfield, dict):
        if tag_name not in farfield:
            raise ValueError(f"no farfield state configured for '{tag_name}' boundary")
        return np.asarray(farfield[tag_name], dtype=float)
    return np.asarray(farfield, dtype=float)


def convective_residual(mesh, dual, state, farfield, interface=None, gradients=None):
    """Net outgoing convective flux integral per node (n, 5).

    Clean edges between real nodes take a MUSCL/Roe flux; edges cut by the
    surface close each real side with the wall model (reconstruct at the
    intersection, wall Riemann state, facet blend, Roe against the nodal
    state).  Ghost-only edges contribute nothing.  Farfield patches take a
    Roe flux against the configured exterior state; slip patches a pure
    pressure flux.  Returns (residual, FluxTally).
    """
    gas = state.gas
    w = state.primitive()
    if gradients is None:
        gradients = compute_gradients(mesh, state, interface)
    edges = mesh.edges
    area = np.linalg.norm(dual.facets, axis=1)
    ok = area > 0.0
    nu = np.where(ok[:, None], dual.facets / np.where(ok, area, 1.0)[:, None], 0.0)

    F = np.zeros_like(w)
    tally = FluxTally(boundary=np.zeros(5), interface=np.zeros(5))

    if interface is None:
        clean = ok
        real = np.ones(mesh.n_nodes, dtype=bool)
    else:
        clean = interface.gradient_edge_mask & ok
        real = interface.real

    wL, wR = muscl_edge_states(mesh.nodes, mesh.edges, w, gradients)
    flux = roe_flux(wL[clean], wR[clean], nu[clean], gas) * area[clean, None]
    np.add.at(F, edges[clean, 0], flux)
    np.add.at(F, edges[clean, 1], -flux)

    if interface is not None and interface.n_treatments:
        node = interface.t_node
        dxi = interface.t_xi - mesh.nodes[node]
        w_i = w[node]
        w_int = w_i + np.einsum("tkc,tc->tk", gradients[node], dxi)
        # bound the one-sided extrapolation by the range of the same-side
        # neighbors, deliberately excluding the node itself: only the normal
        # velocity component is constrained by the wall solve, so a wall
        # state that tracks the node's own tangential state feeds the facet
        # flux back into the cell and can pump it without bound at grazing
        # cuts; capped at the neighbor envelope the cell can never ingest
        # more than its neighbors supply
        env_lo = np.full_like(w, np.inf)
        env_hi = np.full_like(w, -np.inf)
        ce = edges[clean]
        np.minimum.at(env_lo, ce[:, 0], w[ce[:, 1]])
        np.minimum.at(env_lo, ce[:, 1], w[ce[:, 0]])
        np.maximum.at(env_hi, ce[:, 0], w[ce[:, 1]])
        np.maximum.at(env_hi, ce[:, 1], w[ce[:, 0]])
        lonely = ~np.isfinite(env_lo)
        env_lo[lonely] = w[lonely]
        env_hi[lonely] = w[lonely]
        w_int = np.clip(w_int, env_lo[node], env_hi[node])
        bad = (w_int[:, 0] <= 0.0) | (w_int[:, 4] <= 0.0)
        if np.any(bad):
            w_int[bad] = w_i[bad]
        # a wall receding past the reconstructed state's vacuum limit also
        # rejects the reconstruction before it reaches the wave solve
        vn_r = np.einsum("tk,tk->t", w_int[:, 1:4], interface.t_normal)
        wall_vn = np.einsum("tk,tk->t", interface.t_wall_v, interface.t_normal)
        c_r = np.sqrt(gas.gamma * w_int[:, 4] / w_int[:, 0])
        vac = 1.0 + 0.5 * (gas.gamma - 1.0) * (wall_vn - vn_r) / c_r <= 0.0
        if np.any(vac):
            w_int[vac] = w_i[vac]
            bad |= vac
        if np.any(bad):
            tally.first_order_reconstructions = int(np.count_nonzero(bad))
            log.debug("first-order wall reconstruction at %d edges", tally.first_order_reconstructions)

        w_star = wall_interface_state(w_int, interface.t_normal, interface.t_wall_v, gas)
        W_star = primitive_to_conservative(w_star, gas.gamma)
        W_i = primitive_to_conservative(w_i, gas.gamma)
        a = interface.t_alpha[:, None]
        w_facet = conservative_to_primitive(a * W_i + (1.0 - a) * W_star, gas.gamma)
        blend_bad = (w_facet[:, 0] <= 0.0) | (w_facet[:, 4] <= 0.0)
        if np.any(blend_bad):
            w_facet[blend_bad] = w_star[blend_bad]
            tally.positivity_blends = int(np.count_nonzero(blend_bad))
            log.debug("wall-state fallback at %d facets", tally.positivity_blends)

        row = interface.t_edge
        sgn = np.where(node == edges[row, 0], 1.0, -1.0)
        nu_t = sgn[:, None] * nu[row]
        wall_flux = roe_flux(w_i, w_facet, nu_t, gas) * area[row, None]
        np.add.at(F, node, wall_flux)
        tally.interface += wall_flux.sum(axis=0)

    for tag, (ids, vecs) in dual.compact_boundary_patches().items():
        keep = real[ids]
        ids, vecs = ids[keep], vecs[keep]
        if not len(ids):
            continue
        A = np.linalg.norm(vecs, axis=1)
        n_hat = vecs / A[:, None]
        name = BOUNDARY_TAGS[tag]
        if name == "slip":
            bflux = np.zeros((len(ids), 5))
            bflux[:, 1:4] = w[ids, 4, None] * n_hat
        else:
            w_out = np.broadcast_to(_farfield_for(farfield, name), (len(ids), 5))
            bflux = roe_flux(w[ids], w_out, n_hat, gas)
        bflux = bflux * A[:, None]
        np.add.at(F, ids, bflux)
        tally.boundary += bflux.sum(axis=0)

    return F, tally


# ---------------------------------------------------------------------------
# ghost population and diffusive residual


@dataclasses.dataclass
class GhostPopulation:
    """Per-mixed-cell corner values of velocity and temperature.

    Each mixed cell carries its own copy of all four corners: real corners
    hold the real nodal values, occluded corners the values extrapolated
    from this cell's real corners only.  A ghost node shared by several
    mixed cells therefore holds one independent entry per cell.
    """

    tets: np.ndarray
    velocity: np.ndarray
    temperature: np.ndarray
    real_mask: np.ndarray


def populate_ghosts_local(mesh, state, interface, wall_temperature=None):
    """Extrapolate (v, T) onto the occluded corners of every mixed cell.

    Cells with one or two real corners copy the mean of the real values;
    cells with three independent real corners extrapolate linearly in the
    plane the corners span.  With ``wall_temperature`` set, occluded
    corners take that temperature instead (isothermal wall); the default
    leaves temperature extrapolated (adiabatic).
    """
    gas = state.gas
    w = state.primitive()
    vel_n = w[:, 1:4]
    T_n = gas.temperature(w[:, 0], w[:, 4])

    tets = mesh.tets[interface.mixed_tets]
    rm = interface.mixed_real
    vel = vel_n[tets].copy()
    temp = T_n[tets].copy()
    fields = np.concatenate([vel, temp[:, :, None]], axis=2)

    n_real = rm.sum(axis=1)
    wts = rm / n_real[:, None]
    const = np.einsum("mk,mkf->mf", wts, fields)
    filled = np.where(rm[:, :, None], fields, const[:, None, :])

    three = np.flatnonzero(n_real == 3)
    if len(three):
        idx = np.argsort(~rm[three], axis=1, kind="stable")
        ridx, gidx = idx[:, :3], idx[:, 3]
        pts = np.take_along_axis(mesh.nodes[tets[three]], ridx[:, :, None], axis=1)
        f = np.take_along_axis(fields[three], ridx[:, :, None], axis=1)
        e1 = pts[:, 1] - pts[:, 0]
        e2 = pts[:, 2] - pts[:, 0]
        nrm = np.cross(e1, e2)
        A = np.stack([e1, e2, nrm], axis=1)
        b = np.stack([f[:, 1] - f[:, 0], f[:, 2] - f[:, 0], np.zeros_like(f[:, 0])], axis=1)
        scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1) * np.linalg.norm(nrm, axis=1)
        solvable = np.abs(np.linalg.det(A)) > 1e-12 * np.maximum(scale, 1e-300)
        if np.any(solvable):
            g = np.linalg.solve(A[solvable], b[solvable])
            rows = three[solvable]
            xg = mesh.nodes[tets[rows], :][np.arange(len(rows)), gidx[solvable]]
            dx = xg - pts[solvable, 0]
            val = f[solvable, 0] + np.einsum("mc,mcf->mf", dx, g)
            filled[rows, gidx[solvable]] = val

    vel = filled[:, :, :3]
    temp = filled[:, :, 3]
    if wall_temperature is not None:
        temp = np.where(rm, temp, float(wall_temperature))
    return GhostPopulation(interface.mixed_tets, vel, temp, rm)


def diffusive_residual(mesh, state, interface=None, ghosts=None):
    """Net incoming diffusive flux integral per node (n, 5).

    Element-wise P1 gradients of velocity and temperature feed a Newtonian
    stress with Sutherland viscosity and a Fourier heat flux with constant
    Prandtl number.  Mixed cells use their per-cell ghost values; element
    contributions scatter to real corners only.
    """
    gas = state.gas
    F = np.zeros((mesh.n_nodes, 5))
    if not gas.viscous:
        return F
    w = state.primitive()
    vel_n = w[:, 1:4]
    T_n = gas.temperature(w[:, 0], w[:, 4])
    real = interface.real if interface is not None else np.ones(mesh.n_nodes, dtype=bool)
    if np.any(T_n[real] <= 0.0):
        raise StepError("negative temperature at a real node")

    ghost_corner = ~real[mesh.tets]
    n_ghost = ghost_corner.sum(axis=1)

    def accumulate(rows, vel_c, T_c, corner_mask):
        g = mesh.p1_gradients()[rows]
        vol = mesh.volumes[rows]
        gradv = np.einsum("mkc,mkd->mcd", g, vel_c)
        gradT = np.einsum("mkc,mk->mc", g, T_c)
        Tbar = T_c.mean(axis=1)
        mu = gas.viscosity(Tbar)
        kap = gas.conductivity(Tbar)
        div = np.trace(gradv, axis1=1, axis2=2)
        tau = mu[:, None, None] * (gradv + np.transpose(gradv, (0, 2, 1)))
        tau[:, [0, 1, 2], [0, 1, 2]] -= (2.0 / 3.0) * mu[:, None] * div[:, None]
        vbar = vel_c.mean(axis=1)
        evec = np.einsum("mcd,md->mc", tau, vbar) + kap[:, None] * gradT
        mom = -vol[:, None, None] * np.einsum("mkc,mcd->mkd", g, tau)
        ene = -vol[:, None] * np.einsum("mkc,mc->mk", g, evec)
        tgt = mesh.tets[rows]
        sel = corner_mask.ravel()
        np.add.at(F[:, 1:4], tgt.ravel()[sel], mom.reshape(-1, 3)[sel])
        np.add.at(F[:, 4], tgt.ravel()[sel], ene.ravel()[sel])

    clean = np.flatnonzero(n_ghost == 0)
    if len(clean):
        tc = mesh.tets[clean]
        accumulate(clean, vel_n[tc], T_n[tc], np.ones((len(clean), 4), dtype=bool))

    if ghosts is not None and len(ghosts.tets):
        accumulate(ghosts.tets, ghosts.velocity, ghosts.temperature, ghosts.real_mask)

    return F


# ---------------------------------------------------------------------------
# wall tractions


@dataclasses.dataclass
class TractionSample:
    """One quadrature point's shifted evaluation and traction."""

    position: np.ndarray
    traction: np.ndarray
    weight: float
    triangle: int


class TractionSamples:
    """Sequence of TractionSample backed by contiguous arrays."""

    def __init__(self, position, traction, weight, triangle, bary):
        self.position = position
        self.traction = traction
        self.weight = weight
        self.triangle = triangle
        self.bary = bary

    def __len__(self):
        return len(self.weight)

    def __getitem__(self, k):
        return TractionSample(self.position[k], self.traction[k], float(self.weight[k]), int(self.triangle[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def total_force(self):
        return (self.weight[:, None] * self.traction).sum(axis=0)


_QUADRATURE = {
    1: (np.array([[1, 1, 1]]) / 3.0, np.array([1.0])),
    3: (np.array([[4, 1, 1], [1, 4, 1], [1, 1, 4]]) / 6.0, np.full(3, 1.0 / 3.0)),
}


def sample_tractions(mesh, state, surface, interface=None, gradients=None,
                     order=1, shift_scale=1.0, locator=None):
    """Wall tractions (-p n + tau n) at Gauss points shifted off the surface.

    Each Gauss point moves a distance h (cube root of its host cell's
    volume, times ``shift_scale``) along the outward surface normal before
    pressure and viscous stress are evaluated there, averaging nodal
    Taylor extrapolations over the real corners of the receiving cell.
    Points landing outside the mesh or in a fully occluded cell retry at
    half the shift up to three times, then fall back to the unshifted
    point; unresolvable points contribute zero traction.  The traction
    uses the unshifted normal and quadrature weight.
    """
    if order not in _QUADRATURE:
        raise ValueError(f"unsupported quadrature order {order}")
    gas = state.gas
    w = state.primitive()
    if gradients is None:
        gradients = compute_gradients(mesh, state, interface)
    real = interface.real if interface is not None else np.ones(mesh.n_nodes, dtype=bool)
    n_real_corner = real[mesh.tets].sum(axis=1)

    corners, normals, areas = surface.triangle_geometry()
    bary, wfrac = _QUADRATURE[order]
    npt = len(wfrac)
    ntri = surface.n_triangles
    tri_ids = np.repeat(np.arange(ntri), npt)
    g_bary = np.tile(bary, (ntri, 1))
    xg = np.einsum("kp,tpc->tkc", bary, corners).reshape(-1, 3)
    n_g = np.repeat(normals, npt, axis=0)
    weights = (areas[:, None] * wfrac).reshape(-1)

    if locator is None:
        locator = TetLocator(mesh)
    host0 = locator.locate(xg)
    scale = float(np.median(mesh.volumes) ** (1.0 / 3.0))
    h = np.where(host0 >= 0, np.cbrt(mesh.volumes[np.maximum(host0, 0)]), scale)
    h = shift_scale * h

    K = len(xg)
    host = np.full(K, -1, dtype=np.int64)
    x_eval = xg.copy()
    pending = np.ones(K, dtype=bool)
    fallbacks = 0
    for level, frac in enumerate((1.0, 0.5, 0.25, 0.125, 0.0)):
        if not np.any(pending):
            break
        xq = xg[pending] + (frac * h[pending])[:, None] * n_g[pending]
        cand = locator.locate(xq)
        good = (cand >= 0) & (n_real_corner[np.maximum(cand, 0)] > 0)
        rows = np.flatnonzero(pending)[good]
        host[rows] = cand[good]
        x_eval[rows] = xq[good]
        if level > 0:
            fallbacks += int(np.count_nonzero(good))
        pending[rows] = False
    unresolved = int(np.count_nonzero(pending))
    if fallbacks or unresolved:
        log.warning("traction sampling: %d reduced shifts, %d unresolved points", fallbacks, unresolved)

    traction = np.zeros((K, 3))
    done = ~pending
    if np.any(done):
        cn = mesh.tets[host[done]]
        rmask = real[cn]
        dx = x_eval[done][:, None, :] - mesh.nodes[cn]
        p_c = w[cn, 4] + np.einsum("skc,skc->sk", gradients[cn][:, :, 4, :], dx)
        cnt = rmask.sum(axis=1)
        p_s = np.where(rmask, p_c, 0.0).sum(axis=1) / cnt
        traction[done] = -p_s[:, None] * n_g[done]
        if gas.viscous:
            T_node = gas.temperature(w[:, 0], w[:, 4])
            mu_n = gas.viscosity(T_node)
            gv = np.transpose(gradients[:, 1:4, :], (0, 2, 1))
            div = np.trace(gv, axis1=1, axis2=2)
            tau_n = mu_n[:, None, None] * (gv + np.transpose(gv, (0, 2, 1)))
            tau_n[:, [0, 1, 2], [0, 1, 2]] -= (2.0 / 3.0) * mu_n[:, None] * div[:, None]
            tau_c = tau_n[cn]
            tau_s = (np.where(rmask[:, :, None, None], tau_c, 0.0)).sum(axis=1) / cnt[:, None, None]
            traction[done] += np.einsum("scd,sd->sc", tau_s, n_g[done])

    return TractionSamples(x_eval, traction, weights, tri_ids, g_bary)


def integrate_slave_forces(samples, surface):
    """Nodal surface forces from traction samples via linear hat functions."""
    f = np.zeros((surface.n_nodes, 3))
    tris = surface.triangles[samples.triangle]
    contrib = samples.weight[:, None] * samples.traction
    for c in range(3):
        np.add.at(f, tris[:, c], samples.bary[:, c, None] * contrib)
    return f


# ---------------------------------------------------------------------------
# time integration


@dataclasses.dataclass
class AdvanceInfo:
    """Diagnostics of one advance call."""

    steps: int
    halvings: int
    exchange: np.ndarray


def cfl_timestep(dual, state, interface=None, cfl=1.0):
    """Acoustic CFL time-step estimate over real nodes.

    The per-node length scale is the dual volume over the total incident
    facet area, which bounds the spectral radius of the explicit update
    regardless of cell shape: boundary-pinned cells and the transition
    cells of a graded mesh (coarse-side facets against a fine-side volume)
    are charged their true area-to-volume stiffness, where a shortest-edge
    estimate is not.  In this normalization the two-stage integrator is
    linearly stable up to ``cfl`` of about two; the default keeps a
    factor-two margin for reconstruction and wall treatments.
    """
    w = state.primitive()
    real = interface.real if interface is not None else np.ones(len(w), dtype=bool)
    c = state.gas.sound_speed(w[real, 0], w[real, 4])
    speed = np.linalg.norm(w[real, 1:4], axis=1) + c
    return cfl * float(np.min(dual.cell_size[real] / speed))


def _stage_residual(mesh, dual, state, farfield, interface, wall_temperature):
    F, tally = convective_residual(mesh, dual, state, farfield, interface)
    net = tally.total.copy()
    if state.gas.viscous:
        ghosts = None
        if interface is not None and len(interface.mixed_tets):
            ghosts = populate_ghosts_local(mesh, state, interface, wall_temperature)
        G = diffusive_residual(mesh, state, interface, ghosts)
        F = F - G
        net -= G.sum(axis=0)
    return F, net


def advance_fluid(mesh, dual, state, farfield, dt, interface=None,
                  wall_temperature=None, max_halvings=10, _depth=0):
    """One SSP-RK2 step of the real nodes; ghosts stay frozen.

    A stage that produces non-positive density or pressure at any real node
    rejects the whole step, which is then retaken as two halves, recursing
    up to ``max_halvings`` times before raising.  Returns the new state and
    an AdvanceInfo whose ``exchange`` predicts the total change of
    sum_i V_i W_i from boundary, wall and viscous fluxes.
    """
    real = interface.real if interface is not None else np.ones(mesh.n_nodes, dtype=bool)
    vol = dual.volumes[:, None]

    def attempt():
        R0, net0 = _stage_residual(mesh, dual, state, farfield, interface, wall_temperature)
        W1 = state.W.copy()
        W1[real] -= dt / vol[real] * R0[real]
        s1 = FluidState(W1, state.gas, state.t)
        if not _positivity_ok(s1.primitive(), real):
            return None
        R1, net1 = _stage_residual(mesh, dual, s1, farfield, interface, wall_temperature)
        W2 = W1.copy()
        W2[real] -= dt / vol[real] * R1[real]
        Wn = state.W.copy()
        Wn[real] = 0.5 * (state.W[real] + W2[real])
        s_new = FluidState(Wn, state.gas, state.t + dt)
        if not _positivity_ok(s_new.primitive(), real):
            return None
        return s_new, -0.5 * dt * (net0 + net1)

    result = attempt()
    if result is not None:
        s_new, exchange = result
        return s_new, AdvanceInfo(steps=1, halvings=_depth, exchange=exchange)
    if _depth >= max_halvings:
        raise StepError(f"positivity violation persists after {max_halvings} step halvings")
    log.debug("positivity rejection at t=%.6g, retrying with dt=%.3g", state.t, 0.5 * dt)
    mid, info_a = advance_fluid(mesh, dual, state, farfield, 0.5 * dt, interface,
                                wall_temperature, max_halvings, _depth + 1)
    end, info_b = advance_fluid(mesh, dual, mid, farfield, 0.5 * dt, interface,
                                wall_temperature, max_halvings, _depth + 1)
    return end, AdvanceInfo(
        steps=info_a.steps + info_b.steps,
        halvings=max(info_a.halvings, info_b.halvings),
        exchange=info_a.exchange + info_b.exchange,
    )


def reinitialize_new_real_nodes(mesh, state, old_status, new_status):
    """Average stable real neighbors onto nodes freshly uncovered by the surface.

    A node that switches ghost -> real carries stale payload; it restarts
    from the mean conservative state of its edge neighbors that were real
    both before and after the surface moved.  Nodes with no stable real
    neighbor keep their payload (logged).  Returns the uncovered node ids.
    """
    fresh = np.flatnonzero((old_status != NODE_REAL) & (new_status == NODE_REAL))
    if not len(fresh):
        return fresh
    stable = (old_status == NODE_REAL) & (new_status == NODE_REAL)
    edges = mesh.edges
    acc = np.zeros((mesh.n_nodes, 5))
    cnt = np.zeros(mesh.n_nodes)
    for a, b in ((0, 1), (1, 0)):
        sel = stable[edges[:, b]]
        np.add.at(acc, edges[sel, a], state.W[edges[sel, b]])
        np.add.at(cnt, edges[sel, a], 1.0)
    good = fresh[cnt[fresh] > 0]
    state.W[good] = acc[good] / cnt[good, None]
    orphan = len(fresh) - len(good)
    if orphan:
        log.warning("%d uncovered nodes have no stable real neighbor; payload kept", orphan)
    log.debug("reinitialized %d uncovered nodes", len(good))
    return fresh
