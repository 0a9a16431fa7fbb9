"""Run configuration: a single INI file describing gas, flow, cable, outputs.

Every physics parameter is explicit in the file; unknown sections or keys
are hard errors so a typo cannot silently fall back to a default.  The
parsed object carries ready-to-use model instances (gas, cable) next to the
plain numeric groups.
"""

import configparser
import dataclasses
import math

import numpy as np

from .amr import AmrCriteria
from .cable import CableModel
from .errors import ConfigError
from .mesh import BOUNDARY_TAGS
from .riemann import GasModel

_SIDES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")

# section -> key -> (required, default).  Values are parsed by the loaders
# below; this table only polices spelling and presence.
_SCHEMA = {
    "gas": {
        "gamma": (True, None),
        "gas_constant": (True, None),
        "mu0": (False, "0.0"),
        "sutherland_t0": (False, "110.6"),
        "prandtl": (False, "0.72"),
    },
    "farfield": {
        "density": (True, None),
        "pressure": (True, None),
        "mach": (True, None),
        "direction": (False, "1 0 0"),
    },
    "cable": {
        "points": (False, None),
        "start": (False, None),
        "end": (False, None),
        "nodes": (False, None),
        "ea": (True, None),
        "ei": (True, None),
        "gj": (True, None),
        "ga_s": (False, None),
        "mass_per_length": (True, None),
        "rotary_inertia": (True, None),
        "damping_alpha": (False, "0.0"),
        "bc": (False, ""),
        "newton_tol": (False, "1e-10"),
        "newton_maxiter": (False, "25"),
    },
    "surface": {
        "sides": (True, None),
        "diameter": (True, None),
        "caps": (False, "true"),
        "rings_per_element": (False, "1"),
    },
    "coupling": {
        "dt": (True, None),
        "steps": (True, None),
        "integrator": (False, "central"),
        "phase1_steps": (False, "0"),
        "audit": (False, "false"),
        "lift_direction": (False, "0 0 1"),
    },
    "fluid": {
        "bounds": (True, None),
        "resolution": (True, None),
        "cfl": (False, "1.0"),
        "wall_temperature": (False, None),
        **{f"boundary_{s}": (False, "farfield") for s in _SIDES},
    },
    "amr": {
        "enabled": (False, "false"),
        "every": (False, "10"),
        "max_nodes": (False, "200000"),
        "doubly_intersected": (False, "true"),
        "min_edge_length": (False, "0.0"),
        "near_wall": (False, "false"),
        "wall_distance": (False, "0.0"),
        "near_wall_size": (False, "0.0"),
        "feature": (False, "false"),
        "feature_threshold": (False, "0.0"),
        "feature_size": (False, "0.0"),
    },
    "output": {
        "directory": (False, "out"),
        "cadence": (False, "1"),
        "vtk": (False, "false"),
        "figures": (False, "true"),
        "checkpoint_every": (False, "0"),
        "probes": (False, ""),
        "tip_node": (False, None),
    },
}

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _parse_bool(sec, key, raw):
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"[{sec}] {key}: expected a boolean, got '{raw}'") from None


def _parse_float(sec, key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected a number, got '{raw}'") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{sec}] {key}: must be finite")
    return v


def _parse_int(sec, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got '{raw}'") from None


def _parse_vector(sec, key, raw, n=3):
    parts = raw.replace(",", " ").split()
    if len(parts) != n:
        raise ConfigError(f"[{sec}] {key}: expected {n} numbers, got '{raw}'")
    return np.array([_parse_float(sec, key, p) for p in parts])


def _parse_points(sec, key, raw):
    rows = [r for r in raw.split(";") if r.strip()]
    if not rows:
        raise ConfigError(f"[{sec}] {key}: no points given")
    return np.array([_parse_vector(sec, key, r) for r in rows])


def _positive(sec, key, v):
    if not v > 0:
        raise ConfigError(f"[{sec}] {key}: must be positive, got {v}")
    return v


@dataclasses.dataclass
class SurfaceConfig:
    sides: int
    diameter: float
    caps: bool
    rings_per_element: int


@dataclasses.dataclass
class CouplingConfig:
    dt: float
    steps: int
    integrator: str
    phase1_steps: int
    audit: bool
    lift_direction: np.ndarray


@dataclasses.dataclass
class FluidConfig:
    bounds: tuple
    resolution: tuple
    cfl: float
    side_tags: dict
    wall_temperature: float | None


@dataclasses.dataclass
class AmrConfig:
    enabled: bool
    every: int
    max_nodes: int
    criteria: AmrCriteria


@dataclasses.dataclass
class OutputConfig:
    directory: str
    cadence: int
    vtk: bool
    figures: bool
    checkpoint_every: int
    probes: np.ndarray
    tip_node: int | None


@dataclasses.dataclass
class RunConfig:
    """Everything a run needs, with models already constructed."""

    gas: GasModel
    farfield: np.ndarray  # primitive (rho, vx, vy, vz, p)
    mach: float
    flow_direction: np.ndarray
    cable: CableModel
    surface: SurfaceConfig
    coupling: CouplingConfig
    fluid: FluidConfig
    amr: AmrConfig
    output: OutputConfig


def _check_keys(cp):
    unknown_sections = set(cp.sections()) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown config section [{sorted(unknown_sections)[0]}]")
    for sec, keys in _SCHEMA.items():
        has_required = any(required for required, _ in keys.values())
        if sec not in cp:
            if has_required:
                raise ConfigError(f"missing config section [{sec}]")
            continue
        present = set(cp[sec])
        extra = present - set(keys)
        if extra:
            raise ConfigError(f"unknown config key [{sec}] {sorted(extra)[0]}")
        for key, (required, _) in keys.items():
            if required and key not in present:
                raise ConfigError(f"missing config key [{sec}] {key}")


def _get(cp, sec, key):
    default = _SCHEMA[sec][key][1]
    if sec not in cp:
        return default
    return cp[sec].get(key, default)


def _cable_polyline(cp):
    sec = cp["cable"]
    if "points" in sec:
        if "start" in sec or "end" in sec or "nodes" in sec:
            raise ConfigError("[cable] give either points or start/end/nodes, not both")
        pts = _parse_points("cable", "points", sec["points"])
        if len(pts) < 2:
            raise ConfigError("[cable] points: need at least two")
        return pts
    for key in ("start", "end", "nodes"):
        if key not in sec:
            raise ConfigError(f"missing config key [cable] {key}")
    start = _parse_vector("cable", "start", sec["start"])
    end = _parse_vector("cable", "end", sec["end"])
    n = _parse_int("cable", "nodes", sec["nodes"])
    if n < 2:
        raise ConfigError(f"[cable] nodes: need at least 2, got {n}")
    return start + np.linspace(0.0, 1.0, n)[:, None] * (end - start)


def _build_gas(cp):
    gamma = _parse_float("gas", "gamma", _get(cp, "gas", "gamma"))
    if gamma <= 1.0:
        raise ConfigError(f"[gas] gamma: must exceed 1, got {gamma}")
    return GasModel(
        gamma=gamma,
        gas_constant=_positive("gas", "gas_constant",
                               _parse_float("gas", "gas_constant", _get(cp, "gas", "gas_constant"))),
        mu0=_parse_float("gas", "mu0", _get(cp, "gas", "mu0")),
        t0=_positive("gas", "sutherland_t0",
                     _parse_float("gas", "sutherland_t0", _get(cp, "gas", "sutherland_t0"))),
        prandtl=_positive("gas", "prandtl",
                          _parse_float("gas", "prandtl", _get(cp, "gas", "prandtl"))),
    )


def farfield_state(gas, density, pressure, mach, direction):
    """Primitive free-stream vector from (rho, p, M, unit direction)."""
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise ConfigError("[farfield] direction: zero vector")
    c = gas.sound_speed(density, pressure)
    v = mach * c * d / nd
    return np.array([density, v[0], v[1], v[2], pressure])


def _build_cable(cp):
    pts = _cable_polyline(cp)
    sec = "cable"
    ei_raw = _get(cp, sec, "ei").split()
    ei = tuple(_positive(sec, "ei", _parse_float(sec, "ei", p)) for p in ei_raw)
    if len(ei) == 1:
        ei = ei[0]
    elif len(ei) != 2:
        raise ConfigError("[cable] ei: one or two values")
    ga_s = _get(cp, sec, "ga_s")
    bc = [b.strip() for b in _get(cp, sec, "bc").split(",") if b.strip()]
    try:
        return CableModel(
            pts,
            EA=_positive(sec, "ea", _parse_float(sec, "ea", _get(cp, sec, "ea"))),
            EI=ei,
            GJ=_positive(sec, "gj", _parse_float(sec, "gj", _get(cp, sec, "gj"))),
            GA_s=None if ga_s is None else _positive(sec, "ga_s", _parse_float(sec, "ga_s", ga_s)),
            m_L=_positive(sec, "mass_per_length",
                          _parse_float(sec, "mass_per_length", _get(cp, sec, "mass_per_length"))),
            rotary_inertia=_positive(sec, "rotary_inertia",
                                     _parse_float(sec, "rotary_inertia",
                                                  _get(cp, sec, "rotary_inertia"))),
            bc=bc,
            damping_alpha=_parse_float(sec, "damping_alpha", _get(cp, sec, "damping_alpha")),
            newton_tol=_parse_float(sec, "newton_tol", _get(cp, sec, "newton_tol")),
            newton_maxiter=_parse_int(sec, "newton_maxiter", _get(cp, sec, "newton_maxiter")),
        )
    except ValueError as exc:
        raise ConfigError(f"[cable] {exc}") from None


def _build_fluid(cp):
    sec = "fluid"
    bounds = _parse_points(sec, "bounds", _get(cp, sec, "bounds"))
    if bounds.shape != (2, 3):
        raise ConfigError("[fluid] bounds: expected 'x0 y0 z0; x1 y1 z1'")
    if not np.all(bounds[1] > bounds[0]):
        raise ConfigError("[fluid] bounds: upper corner must exceed lower corner")
    res = _parse_vector(sec, "resolution", _get(cp, sec, "resolution"))
    if np.any(res < 1) or np.any(res != np.round(res)):
        raise ConfigError("[fluid] resolution: three positive integers")
    tags = {}
    for side in _SIDES:
        tag = _get(cp, sec, f"boundary_{side}").strip()
        if tag not in BOUNDARY_TAGS:
            raise ConfigError(
                f"[fluid] boundary_{side}: unknown tag '{tag}' (one of {', '.join(BOUNDARY_TAGS)})")
        tags[side] = tag
    wt = _get(cp, sec, "wall_temperature")
    return FluidConfig(
        bounds=(tuple(bounds[0]), tuple(bounds[1])),
        resolution=tuple(int(r) for r in res),
        cfl=_positive(sec, "cfl", _parse_float(sec, "cfl", _get(cp, sec, "cfl"))),
        side_tags=tags,
        wall_temperature=None if wt is None else _positive(sec, "wall_temperature",
                                                           _parse_float(sec, "wall_temperature", wt)),
    )


def parse_config(text):
    """Parse INI text into a :class:`RunConfig`; bad input raises ConfigError."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    _check_keys(cp)

    gas = _build_gas(cp)
    density = _positive("farfield", "density",
                        _parse_float("farfield", "density", _get(cp, "farfield", "density")))
    pressure = _positive("farfield", "pressure",
                         _parse_float("farfield", "pressure", _get(cp, "farfield", "pressure")))
    mach = _parse_float("farfield", "mach", _get(cp, "farfield", "mach"))
    if mach < 0:
        raise ConfigError(f"[farfield] mach: must be nonnegative, got {mach}")
    direction = _parse_vector("farfield", "direction", _get(cp, "farfield", "direction"))
    farfield = farfield_state(gas, density, pressure, mach, direction)

    cable = _build_cable(cp)

    sides = _parse_int("surface", "sides", _get(cp, "surface", "sides"))
    if sides < 3:
        raise ConfigError(f"[surface] sides: need at least 3, got {sides}")
    surface = SurfaceConfig(
        sides=sides,
        diameter=_positive("surface", "diameter",
                           _parse_float("surface", "diameter", _get(cp, "surface", "diameter"))),
        caps=_parse_bool("surface", "caps", _get(cp, "surface", "caps")),
        rings_per_element=max(1, _parse_int("surface", "rings_per_element",
                                            _get(cp, "surface", "rings_per_element"))),
    )

    integrator = _get(cp, "coupling", "integrator").strip().lower()
    if integrator not in ("central", "midpoint"):
        raise ConfigError(f"[coupling] integrator: 'central' or 'midpoint', got '{integrator}'")
    lift = _parse_vector("coupling", "lift_direction", _get(cp, "coupling", "lift_direction"))
    if np.linalg.norm(lift) == 0.0:
        raise ConfigError("[coupling] lift_direction: zero vector")
    coupling = CouplingConfig(
        dt=_positive("coupling", "dt", _parse_float("coupling", "dt", _get(cp, "coupling", "dt"))),
        steps=_parse_int("coupling", "steps", _get(cp, "coupling", "steps")),
        integrator=integrator,
        phase1_steps=_parse_int("coupling", "phase1_steps", _get(cp, "coupling", "phase1_steps")),
        audit=_parse_bool("coupling", "audit", _get(cp, "coupling", "audit")),
        lift_direction=lift / np.linalg.norm(lift),
    )
    if coupling.steps < 0 or coupling.phase1_steps < 0:
        raise ConfigError("[coupling] steps and phase1_steps must be nonnegative")

    fluid = _build_fluid(cp)

    criteria = AmrCriteria(
        doubly_intersected=_parse_bool("amr", "doubly_intersected",
                                       _get(cp, "amr", "doubly_intersected")),
        min_edge_length=_parse_float("amr", "min_edge_length", _get(cp, "amr", "min_edge_length")),
        near_wall=_parse_bool("amr", "near_wall", _get(cp, "amr", "near_wall")),
        wall_distance=_parse_float("amr", "wall_distance", _get(cp, "amr", "wall_distance")),
        near_wall_size=_parse_float("amr", "near_wall_size", _get(cp, "amr", "near_wall_size")),
        feature=_parse_bool("amr", "feature", _get(cp, "amr", "feature")),
        feature_threshold=_parse_float("amr", "feature_threshold",
                                       _get(cp, "amr", "feature_threshold")),
        feature_size=_parse_float("amr", "feature_size", _get(cp, "amr", "feature_size")),
    )
    amr = AmrConfig(
        enabled=_parse_bool("amr", "enabled", _get(cp, "amr", "enabled")),
        every=_parse_int("amr", "every", _get(cp, "amr", "every")),
        max_nodes=_parse_int("amr", "max_nodes", _get(cp, "amr", "max_nodes")),
        criteria=criteria,
    )
    if amr.every < 1:
        raise ConfigError(f"[amr] every: must be at least 1, got {amr.every}")

    cadence = _parse_int("output", "cadence", _get(cp, "output", "cadence"))
    if cadence < 1:
        raise ConfigError(f"[output] cadence: must be at least 1, got {cadence}")
    probes_raw = _get(cp, "output", "probes")
    probes = (_parse_points("output", "probes", probes_raw)
              if probes_raw.strip() else np.zeros((0, 3)))
    tip = _get(cp, "output", "tip_node")
    tip_node = None if tip is None else _parse_int("output", "tip_node", tip)
    if tip_node is not None and not (0 <= tip_node < cable.n_nodes):
        raise ConfigError(f"[output] tip_node: out of range 0..{cable.n_nodes - 1}")
    output = OutputConfig(
        directory=_get(cp, "output", "directory"),
        cadence=cadence,
        vtk=_parse_bool("output", "vtk", _get(cp, "output", "vtk")),
        figures=_parse_bool("output", "figures", _get(cp, "output", "figures")),
        checkpoint_every=_parse_int("output", "checkpoint_every",
                                    _get(cp, "output", "checkpoint_every")),
        probes=probes,
        tip_node=tip_node,
    )

    return RunConfig(
        gas=gas,
        farfield=farfield,
        mach=mach,
        flow_direction=direction / np.linalg.norm(direction),
        cable=cable,
        surface=surface,
        coupling=coupling,
        fluid=fluid,
        amr=amr,
        output=output,
    )


def load_config(path):
    """Read and parse an INI run configuration file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
