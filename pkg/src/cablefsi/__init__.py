"""Embedded-boundary fluid-structure interaction for cable-like structures.

A finite-element beam centerline drives an embedded discrete surface inside
a vertex-centered compressible finite-volume flow solver; loads travel back
through an energy-consistent master-slave transfer.
"""

__version__ = "0.1.0"

from .cable import CableModel, CableState, zero_state
from .config import RunConfig, load_config, parse_config
from .coupling import Pairing, pair_slaves, update_surface_motion
from .driver import (
    RunHistory,
    Simulation,
    build_simulation,
    load_checkpoint,
    run_amr_cycle,
    run_property_audit,
    run_staggered,
    save_checkpoint,
)
from .errors import (
    CableFsiError,
    ConfigError,
    GeometryError,
    RefinementError,
    StepError,
    VacuumError,
)
from .fluid import FluidState, advance_fluid, build_interface, cfl_timestep, uniform_state
from .mesh import (
    Mesh,
    build_box_mesh,
    compute_dual_geometry,
    load_mesh,
    refine_edges,
    save_mesh,
)
from .riemann import GasModel, PrimitiveState, roe_flux, solve_half_riemann, solve_riemann
from .surface import EmbeddedSurface, generate_cable_surface

__all__ = [
    "CableFsiError",
    "CableModel",
    "CableState",
    "ConfigError",
    "EmbeddedSurface",
    "FluidState",
    "GasModel",
    "GeometryError",
    "Mesh",
    "Pairing",
    "PrimitiveState",
    "RefinementError",
    "RunConfig",
    "RunHistory",
    "Simulation",
    "StepError",
    "VacuumError",
    "__version__",
    "advance_fluid",
    "build_box_mesh",
    "build_interface",
    "build_simulation",
    "cfl_timestep",
    "compute_dual_geometry",
    "generate_cable_surface",
    "load_checkpoint",
    "load_config",
    "load_mesh",
    "pair_slaves",
    "parse_config",
    "refine_edges",
    "roe_flux",
    "run_amr_cycle",
    "run_property_audit",
    "run_staggered",
    "save_checkpoint",
    "save_mesh",
    "solve_half_riemann",
    "solve_riemann",
    "uniform_state",
    "update_surface_motion",
    "zero_state",
]
