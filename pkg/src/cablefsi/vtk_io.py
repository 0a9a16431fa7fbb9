"""Legacy ASCII VTK writers for volume meshes, flow fields, and surfaces."""

import numpy as np

from .surface import NODE_GHOST

_TET = 10
_TRIANGLE = 5


def _write_grid(f, title, points, cells, cell_type):
    f.write("# vtk DataFile Version 3.0\n")
    f.write(f"{title}\n")
    f.write("ASCII\n")
    f.write("DATASET UNSTRUCTURED_GRID\n")
    f.write(f"POINTS {len(points)} double\n")
    np.savetxt(f, points, fmt="%.12g")
    k = cells.shape[1]
    f.write(f"CELLS {len(cells)} {len(cells) * (k + 1)}\n")
    np.savetxt(f, np.column_stack([np.full(len(cells), k), cells]), fmt="%d")
    f.write(f"CELL_TYPES {len(cells)}\n")
    np.savetxt(f, np.full(len(cells), cell_type), fmt="%d")


def _write_scalars(f, name, values, kind="double"):
    f.write(f"SCALARS {name} {kind} 1\n")
    f.write("LOOKUP_TABLE default\n")
    np.savetxt(f, np.asarray(values).reshape(-1, 1), fmt="%d" if kind == "int" else "%.12g")


def _write_vectors(f, name, values):
    f.write(f"VECTORS {name} double\n")
    np.savetxt(f, values, fmt="%.12g")


def write_vtk_mesh(path, mesh):
    """Plain tetrahedral grid with no attached fields."""
    with open(path, "w") as f:
        _write_grid(f, "tetrahedral mesh", mesh.nodes, mesh.tets, _TET)


def write_vtk_flow(path, mesh, state, status=None):
    """Flow snapshot: density, velocity, pressure, Mach and node status."""
    w = state.primitive()
    c = state.gas.sound_speed(w[:, 0], w[:, 4])
    mach = np.linalg.norm(w[:, 1:4], axis=1) / c
    if status is None:
        status = np.zeros(mesh.n_nodes, dtype=np.uint8)
    with open(path, "w") as f:
        _write_grid(f, f"flow field t={state.t:.9g}", mesh.nodes, mesh.tets, _TET)
        f.write(f"POINT_DATA {mesh.n_nodes}\n")
        _write_scalars(f, "density", w[:, 0])
        _write_vectors(f, "velocity", w[:, 1:4])
        _write_scalars(f, "pressure", w[:, 4])
        _write_scalars(f, "mach", mach)
        _write_scalars(f, "node_status", (status == NODE_GHOST).astype(int), kind="int")


def write_vtk_surface(path, surface):
    """Embedded surface triangles with nodal displacement and velocity."""
    with open(path, "w") as f:
        _write_grid(f, "embedded surface", surface.positions, surface.triangles, _TRIANGLE)
        f.write(f"POINT_DATA {len(surface.positions)}\n")
        _write_vectors(f, "displacement", surface.displacements)
        _write_vectors(f, "velocity", surface.velocities)
