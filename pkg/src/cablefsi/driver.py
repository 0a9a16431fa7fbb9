"""Staggered fluid-structure loop, adaptation cycles, checkpoints, audits.

The coupling is conventional serial staggering: the fluid subcycles at its
own stable step across one coupling step with the interface geometry and
velocity frozen at the structure's last state, the sampled wall loads then
drive one structural step, and the surface follows the structure before
intersections and occlusion are refreshed.  First-order coupling accuracy
is accepted in exchange for an explicit, checkpointable loop.
"""

import csv
import dataclasses
import logging
import pathlib

import numpy as np

from . import cable as cable_mod
from .amr import mark_for_amr
from .cable import CableState, zero_state
from .coupling import (
    aggregate_loads,
    distribute_loads,
    pair_slaves,
    update_surface_motion,
    virtual_work_check,
)
from .errors import CableFsiError, ConfigError, StepError
from .fluid import (
    FluidState,
    TetLocator,
    advance_fluid,
    build_interface,
    cfl_timestep,
    convective_residual,
    integrate_slave_forces,
    reinitialize_new_real_nodes,
    sample_tractions,
    uniform_state,
)
from .mesh import Mesh, build_box_mesh, check_conformity, compute_dual_geometry, refine_edges
from .riemann import GasModel, solve_half_riemann
from .surface import NODE_GHOST, NODE_REAL, generate_cable_surface

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cablefsi-checkpoint-1"

HISTORY_COLUMNS = (
    "step", "time", "drag", "lift", "tip_ux", "tip_uy", "tip_uz",
    "fluid_mass", "mesh_nodes", "mesh_tets", "interface_treatments", "fluid_substeps",
)


@dataclasses.dataclass
class Simulation:
    """Mutable bundle of everything the coupled loop advances."""

    config: object
    mesh: Mesh
    dual: object
    surface: object
    pairing: object
    structure: CableState
    fluid: FluidState
    interface: object
    locator: TetLocator
    step: int = 0


class RunHistory:
    """Per-coupling-step scalar records with a stable CSV schema."""

    def __init__(self, columns=HISTORY_COLUMNS):
        self.columns = tuple(columns)
        self.rows = []

    def append(self, **kw):
        missing = set(self.columns) - set(kw)
        if missing:
            raise ValueError(f"history row missing {sorted(missing)}")
        self.rows.append(tuple(kw[c] for c in self.columns))

    def column(self, name):
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        return path


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def centerline_knots(model, rings_per_element):
    """Surface ring stations along the cable, densified between nodes."""
    if rings_per_element <= 1:
        return model.points.copy()
    knots = [model.points[0]]
    for e in range(model.n_elements):
        a, b = model.points[e], model.points[e + 1]
        for k in range(1, rings_per_element + 1):
            knots.append(a + (k / rings_per_element) * (b - a))
    return np.asarray(knots)


def build_simulation(config):
    """Construct the initial coupled state from a parsed configuration."""
    mesh = build_box_mesh(config.fluid.bounds, config.fluid.resolution,
                          side_tags=config.fluid.side_tags)
    dual = compute_dual_geometry(mesh)
    knots = centerline_knots(config.cable, config.surface.rings_per_element)
    surface = generate_cable_surface(knots, config.surface.sides, config.surface.diameter,
                                     caps=config.surface.caps)
    pairing = pair_slaves(surface, config.cable)
    structure = zero_state(config.cable)
    update_surface_motion(surface, pairing, config.cable, structure)
    interface = build_interface(mesh, surface)
    fluid = uniform_state(mesh.n_nodes, config.gas, config.farfield)
    return Simulation(
        config=config, mesh=mesh, dual=dual, surface=surface, pairing=pairing,
        structure=structure, fluid=fluid, interface=interface, locator=TetLocator(mesh),
    )


def _subcycle_fluid(sim, dt_target):
    """Advance the fluid by dt_target at its own CFL step; frozen geometry."""
    cfg = sim.config
    remaining = dt_target
    substeps = 0
    while remaining > 1e-14 * dt_target:
        dt = min(cfl_timestep(sim.dual, sim.fluid, sim.interface, cfl=cfg.fluid.cfl), remaining)
        sim.fluid, info = advance_fluid(
            sim.mesh, sim.dual, sim.fluid, cfg.farfield, dt, sim.interface,
            wall_temperature=cfg.fluid.wall_temperature,
        )
        substeps += info.steps
        remaining -= dt
    return substeps


def _wall_loads(sim, load_hook=None):
    """Sample tractions and push them down to cable nodal forces/moments."""
    samples = sample_tractions(sim.mesh, sim.fluid, sim.surface, sim.interface,
                               locator=sim.locator)
    slave_forces = integrate_slave_forces(samples, sim.surface)
    if load_hook is not None:
        slave_forces = load_hook(slave_forces)
    loads = aggregate_loads(slave_forces, sim.pairing, sim.config.cable, sim.structure)
    f_n, m_n = distribute_loads(loads, sim.pairing, sim.config.cable)
    return slave_forces, f_n, m_n


def _structure_step(sim, f_n, m_n):
    f_ext = np.hstack([f_n, m_n])
    stepper = (cable_mod.step_central_difference
               if sim.config.coupling.integrator == "central" else cable_mod.step_midpoint)
    sim.structure = stepper(sim.config.cable, sim.structure, f_ext, sim.config.coupling.dt)


def _refresh_interface(sim):
    old = sim.interface.status
    sim.interface = build_interface(sim.mesh, sim.surface)
    reinitialize_new_real_nodes(sim.mesh, sim.fluid, old, sim.interface.status)


def _tip_node(config):
    if config.output.tip_node is not None:
        return config.output.tip_node
    free = ~config.cable.fixed[:, :3].all(axis=1)
    idx = np.flatnonzero(free)
    return int(idx[-1]) if len(idx) else config.cable.n_nodes - 1


def _history_row(sim, slave_forces, substeps):
    cfg = sim.config
    total = slave_forces.sum(axis=0)
    tip = _tip_node(cfg)
    return dict(
        step=sim.step,
        time=sim.structure.t,
        drag=float(total @ cfg.flow_direction),
        lift=float(total @ cfg.coupling.lift_direction),
        tip_ux=float(sim.structure.u[tip, 0]),
        tip_uy=float(sim.structure.u[tip, 1]),
        tip_uz=float(sim.structure.u[tip, 2]),
        fluid_mass=float(sim.dual.volumes @ sim.fluid.W[:, 0]),
        mesh_nodes=sim.mesh.n_nodes,
        mesh_tets=sim.mesh.n_tets,
        interface_treatments=sim.interface.n_treatments,
        fluid_substeps=substeps,
    )


class _OutputSet:
    """Owns the output directory and all per-run file emission."""

    def __init__(self, config):
        self.config = config
        self.dir = pathlib.Path(config.output.directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.audit_rows = []
        self.cable_rows = []
        self.probe_rows = []

    def due(self, step):
        return step % self.config.output.cadence == 0

    def snapshot(self, sim):
        if not self.config.output.vtk or not self.due(sim.step):
            return
        from .vtk_io import write_vtk_flow, write_vtk_surface

        write_vtk_flow(self.dir / f"flow_{sim.step:06d}.vtk", sim.mesh, sim.fluid,
                       sim.interface.status)
        write_vtk_surface(self.dir / f"surface_{sim.step:06d}.vtk", sim.surface)

    def record(self, sim, slave_forces, f_n, m_n):
        cfg = sim.config
        if cfg.coupling.audit:
            dw_f, dw_s = virtual_work_check(
                slave_forces, sim.pairing, cfg.cable, sim.structure,
                sim.structure.v, sim.structure.omega)
            fs = slave_forces.sum(axis=0)
            fn = f_n.sum(axis=0)
            self.audit_rows.append((sim.structure.t, *fs, *fn, dw_f - dw_s))
        if self.due(sim.step):
            self.cable_rows.append(
                (sim.structure.t, *sim.structure.u.ravel(), *sim.structure.v.ravel()))
            if len(cfg.output.probes):
                self.probe_rows.append((sim.structure.t, *self._probe_values(sim)))

    def _probe_values(self, sim):
        host = sim.locator.locate(sim.config.output.probes)
        w = sim.fluid.primitive()
        out = []
        for pt, h in zip(sim.config.output.probes, host):
            if h < 0:
                out.extend([np.nan] * 5)
                continue
            corners = sim.mesh.tets[h]
            g = sim.mesh.p1_gradients()[h]
            lam = g @ (pt - sim.mesh.nodes[corners[0]])
            lam[0] += 1.0
            out.extend(lam @ w[corners])
        return out

    def checkpoint(self, sim, tag=None):
        every = self.config.output.checkpoint_every
        name = tag or f"checkpoint_{sim.step:06d}"
        if tag is None and (every < 1 or sim.step % every != 0):
            return None
        path = self.dir / f"{name}.npz"
        save_checkpoint(path, sim)
        return path

    def finalize(self, sim, history):
        paths = [history.save_csv(self.dir / "history.csv")]
        n = sim.config.cable.n_nodes
        cols = ["time"]
        cols += [f"u{i}_{c}" for i in range(n) for c in "xyz"]
        cols += [f"v{i}_{c}" for i in range(n) for c in "xyz"]
        paths.append(_write_csv(self.dir / "cable_history.csv", cols, self.cable_rows))
        if self.config.coupling.audit:
            cols = ["time", "sum_fs_x", "sum_fs_y", "sum_fs_z",
                    "sum_fn_x", "sum_fn_y", "sum_fn_z", "dw_mismatch"]
            paths.append(_write_csv(self.dir / "conservation.csv", cols, self.audit_rows))
        if len(self.config.output.probes):
            cols = ["time"]
            for k in range(len(self.config.output.probes)):
                cols += [f"probe{k}_{q}" for q in ("rho", "vx", "vy", "vz", "p")]
            paths.append(_write_csv(self.dir / "probes.csv", cols, self.probe_rows))
        return paths


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def run_staggered(config, *, rigid=False, load_hook=None, sim=None):
    """Run the serial staggered loop; returns (simulation, history, files).

    Phase 1 (``phase1_steps`` coupling steps) drives the flow toward a
    quasi-steady state around the frozen structure; the structural state is
    untouched until phase 2.  ``rigid`` keeps the structure frozen for the
    whole run (pure CFD around the cable).  ``load_hook`` maps the slave
    force array before it reaches the structure; tests use it to decouple
    the physics.  A fluid or structural failure checkpoints the last valid
    state and re-raises.
    """
    if sim is None:
        sim = build_simulation(config)
    out = _OutputSet(config)
    history = RunHistory()
    out.snapshot(sim)

    try:
        for _ in range(config.coupling.phase1_steps):
            _subcycle_fluid(sim, config.coupling.dt)
        total = config.coupling.steps
        while sim.step < total:
            substeps = _subcycle_fluid(sim, config.coupling.dt)
            slave_forces, f_n, m_n = _wall_loads(sim, load_hook)
            if rigid:
                sim.structure = CableState(
                    sim.structure.u, sim.structure.theta, sim.structure.v,
                    sim.structure.omega, sim.structure.t + config.coupling.dt)
            else:
                _structure_step(sim, f_n, m_n)
                update_surface_motion(sim.surface, sim.pairing, config.cable, sim.structure)
                _refresh_interface(sim)
            sim.step += 1
            history.append(**_history_row(sim, slave_forces, substeps))
            out.record(sim, slave_forces, f_n, m_n)
            out.snapshot(sim)
            out.checkpoint(sim)
            if config.amr.enabled and sim.step % config.amr.every == 0:
                run_amr_cycle(sim)
    except CableFsiError:
        path = out.checkpoint(sim, tag="abort")
        log.error("run aborted at step %d; last valid state in %s", sim.step, path)
        raise

    files = out.finalize(sim, history)
    return sim, history, files


# ---------------------------------------------------------------------------
# adaptation


def midpoint_transfer(new_mesh, values):
    """Carry nodal values to a refined mesh by edge-midpoint averaging.

    Exact on fields linear in position since every new node sits at the
    midpoint of its parent edge; parents created earlier in the same sweep
    are already filled when their children appear.
    """
    values = np.asarray(values)
    out = np.empty((new_mesh.n_nodes,) + values.shape[1:], dtype=values.dtype)
    out[: len(values)] = values
    for nid, (a, b) in (new_mesh.parent_edges or {}).items():
        out[nid] = 0.5 * (out[a] + out[b])
    return out


def run_amr_cycle(sim):
    """One mark/refine/transfer pass; returns True when the mesh changed."""
    cfg = sim.config
    w = sim.fluid.primitive()
    marked = mark_for_amr(sim.mesh, sim.surface, cfg.amr.criteria,
                          velocity=w[:, 1:4], node_mask=sim.interface.real)
    if len(marked) == 0:
        return False
    new_mesh = refine_edges(sim.mesh, marked)
    if new_mesh is sim.mesh:
        return False
    if new_mesh.n_nodes > cfg.amr.max_nodes:
        log.warning("amr cycle skipped: %d nodes would exceed budget %d",
                    new_mesh.n_nodes, cfg.amr.max_nodes)
        return False

    W_new = midpoint_transfer(new_mesh, sim.fluid.W)
    old_mass = float(sim.dual.volumes @ sim.fluid.W[:, 0])
    old_status = sim.interface.status
    sim.mesh = new_mesh
    sim.dual = compute_dual_geometry(new_mesh)
    sim.fluid = FluidState(W_new, sim.fluid.gas, sim.fluid.t)
    sim.interface = build_interface(new_mesh, sim.surface)
    sim.locator = TetLocator(new_mesh)
    # a midpoint with an occluded parent inherits half a stale payload;
    # re-seed it from settled neighbors like a freshly uncovered node
    mapped = np.full(new_mesh.n_nodes, NODE_GHOST, dtype=old_status.dtype)
    mapped[: len(old_status)] = old_status
    for m, (a, b) in new_mesh.parent_edges.items():
        if mapped[a] == NODE_REAL and mapped[b] == NODE_REAL:
            mapped[m] = NODE_REAL
    reinitialize_new_real_nodes(new_mesh, sim.fluid, mapped, sim.interface.status)
    new_mass = float(sim.dual.volumes @ sim.fluid.W[:, 0])
    log.info("amr transfer: mass %.12e -> %.12e (drift %.3e)",
             old_mass, new_mass, new_mass - old_mass)
    return True


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, sim):
    """Write a versioned binary checkpoint of the full state bundle."""
    np.savez(
        path,
        format=np.array(CHECKPOINT_FORMAT),
        step=np.array(sim.step),
        mesh_nodes=sim.mesh.nodes,
        mesh_nvb_verts=sim.mesh.nvb_verts,
        mesh_nvb_tag=sim.mesh.nvb_tag,
        mesh_bfaces=sim.mesh.boundary_faces,
        mesh_btags=sim.mesh.boundary_tags,
        fluid_w=sim.fluid.W,
        fluid_t=np.array(sim.fluid.t),
        cable_u=sim.structure.u,
        cable_theta=sim.structure.theta,
        cable_v=sim.structure.v,
        cable_omega=sim.structure.omega,
        cable_t=np.array(sim.structure.t),
    )
    return path


def load_checkpoint(path, config):
    """Rebuild a Simulation from a checkpoint and its original config."""
    with np.load(path, allow_pickle=False) as z:
        fmt = str(z["format"])
        if fmt != CHECKPOINT_FORMAT:
            raise ConfigError(f"unsupported checkpoint format '{fmt}' in {path}")
        mesh = Mesh(z["mesh_nodes"], z["mesh_nvb_verts"], z["mesh_nvb_tag"],
                    z["mesh_bfaces"], z["mesh_btags"])
        structure = CableState(z["cable_u"], z["cable_theta"], z["cable_v"],
                               z["cable_omega"], float(z["cable_t"]))
        fluid = FluidState(z["fluid_w"], config.gas, float(z["fluid_t"]))
        step = int(z["step"])
    knots = centerline_knots(config.cable, config.surface.rings_per_element)
    surface = generate_cable_surface(knots, config.surface.sides, config.surface.diameter,
                                     caps=config.surface.caps)
    pairing = pair_slaves(surface, config.cable)
    update_surface_motion(surface, pairing, config.cable, structure)
    return Simulation(
        config=config, mesh=mesh, dual=compute_dual_geometry(mesh), surface=surface,
        pairing=pairing, structure=structure, fluid=fluid,
        interface=build_interface(mesh, surface), locator=TetLocator(mesh), step=step,
    )


# ---------------------------------------------------------------------------
# property audit (the `check` subcommand)


@dataclasses.dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check(name, ok, detail):
    return CheckResult(name, bool(ok), detail)


def _half_riemann_residual(rho, vn, p, wall_vn, gamma):
    gas = GasModel(gamma=gamma, gas_constant=287.0)
    rho_s, p_s = solve_half_riemann(np.array([rho]), np.array([vn]), np.array([p]),
                                    np.array([wall_vn]), gas)
    rho_s, p_s = float(rho_s[0]), float(p_s[0])
    if abs(p_s - p) <= 1e-13 * p:  # wall matching the flow
        return abs(rho_s - rho) / rho
    if p_s > p:  # advancing wall: jump conditions across one shock
        s = (rho * vn - rho_s * wall_vn) / (rho - rho_s)
        r_mass = rho * (vn - s) - rho_s * (wall_vn - s)
        mom1 = rho * vn * (vn - s) + p
        mom2 = rho_s * wall_vn * (wall_vn - s) + p_s
        return max(abs(r_mass) / (rho * abs(vn - s) + 1e-300),
                   abs(mom1 - mom2) / (abs(mom1) + abs(mom2)))
    # receding wall: isentrope and outgoing invariant across the fan
    c = np.sqrt(gamma * p / rho)
    c_s = np.sqrt(gamma * p_s / rho_s)
    r_ent = abs(p_s / rho_s**gamma - p / rho**gamma) / (p / rho**gamma)
    r_inv = abs((wall_vn - 2 * c_s / (gamma - 1)) - (vn - 2 * c / (gamma - 1))) / c
    return max(r_ent, r_inv)


def run_property_audit(config, seed=0):
    """Structural invariants checked on the configured scenario."""
    rng = np.random.default_rng(seed)
    results = []

    mesh = build_box_mesh(config.fluid.bounds, config.fluid.resolution,
                          side_tags=config.fluid.side_tags)
    dual = compute_dual_geometry(mesh)
    results.append(_check("mesh conformity", check_conformity(mesh),
                          f"{mesh.n_tets} elements"))

    closure = np.zeros((mesh.n_nodes, 3))
    fa = dual.facets
    np.add.at(closure, mesh.edges[:, 0], fa)
    np.add.at(closure, mesh.edges[:, 1], -fa)
    closure += dual.node_closure
    worst = np.linalg.norm(closure, axis=1).max()
    scale = np.linalg.norm(fa, axis=1).max()
    results.append(_check("dual cell closure", worst <= 1e-10 * scale,
                          f"max residual {worst:.3e}"))

    knots = centerline_knots(config.cable, config.surface.rings_per_element)
    surface = generate_cable_surface(knots, config.surface.sides, config.surface.diameter,
                                     caps=config.surface.caps)
    _, _, areas = surface.triangle_geometry()
    sc = np.linalg.norm(surface.area_closure())
    results.append(_check("surface closure", sc <= 1e-9 * areas.sum() or not config.surface.caps,
                          f"|sum A n| = {sc:.3e}"))

    state = uniform_state(mesh.n_nodes, config.gas, config.farfield)
    F, _ = convective_residual(mesh, dual, state, config.farfield)
    fscale = max(config.farfield[4], 1.0) * np.linalg.norm(fa, axis=1).max()
    fworst = np.abs(F).max()
    results.append(_check("free-stream preservation", fworst <= 1e-9 * fscale,
                          f"max residual {fworst:.3e}"))

    worst_hr = 0.0
    for _ in range(200):
        gamma = rng.uniform(1.1, 1.67)
        rho = rng.uniform(0.1, 5.0)
        p = rng.uniform(1e3, 5e5)
        c = np.sqrt(gamma * p / rho)
        vn = rng.uniform(-1.5, 1.5) * c
        wall_vn = vn + rng.uniform(-0.9, 0.9) * c
        worst_hr = max(worst_hr, _half_riemann_residual(rho, vn, p, wall_vn, gamma))
    results.append(_check("wall Riemann closure", worst_hr <= 1e-10,
                          f"worst residual {worst_hr:.3e}"))

    model = config.cable
    pairing = pair_slaves(surface, model)
    structure = zero_state(model)
    structure.theta[:] = 0.05 * rng.standard_normal(structure.theta.shape)
    worst_dw, worst_bal = 0.0, 0.0
    for _ in range(20):
        f_s = rng.standard_normal((pairing.n_slaves, 3))
        du = rng.standard_normal((model.n_nodes, 3))
        dth = rng.standard_normal((model.n_nodes, 3))
        dw_f, dw_s = virtual_work_check(f_s, pairing, model, structure, du, dth)
        worst_dw = max(worst_dw, abs(dw_f - dw_s) / max(abs(dw_f), 1e-30))
        loads = aggregate_loads(f_s, pairing, model, structure)
        f_n, _ = distribute_loads(loads, pairing, model)
        num = np.linalg.norm(f_n.sum(axis=0) - f_s.sum(axis=0))
        worst_bal = max(worst_bal, num / max(np.linalg.norm(f_s.sum(axis=0)), 1e-30))
    results.append(_check("transfer virtual work", worst_dw <= 1e-12,
                          f"worst relative mismatch {worst_dw:.3e}"))
    results.append(_check("transfer load balance", worst_bal <= 1e-13,
                          f"worst relative defect {worst_bal:.3e}"))

    return results
