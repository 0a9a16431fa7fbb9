"""Command-line entry points: run, cfd, shocktube, mesh, check."""

import argparse
import csv
import logging
import pathlib
import sys

import numpy as np

from .config import load_config
from .driver import load_checkpoint, run_property_audit, run_staggered
from .errors import CableFsiError, ConfigError
from .mesh import build_box_mesh, check_conformity, load_mesh, refine_edges, save_mesh
from .report import render_history_figures
from .riemann import GasModel, PrimitiveState, solve_riemann
from .vtk_io import write_vtk_mesh

log = logging.getLogger(__name__)

_SHOCKTUBE_CASES = (
    ("sod", (1.0, 0.0, 1.0), (0.125, 0.0, 0.1), 0.15),
    ("lax", (0.445, 0.698, 3.528), (0.5, 0.0, 0.571), 0.1),
    ("double_expansion", (1.0, -2.0, 0.4), (1.0, 2.0, 0.4), 0.15),
    ("strong_shock", (1.0, 0.0, 1000.0), (1.0, 0.0, 0.01), 0.012),
)


class _Parser(argparse.ArgumentParser):
    # usage problems are config errors (exit 1), not the argparse default 2
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="cablefsi",
                description="Embedded-boundary fluid-structure interaction for cables.")
    p.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="coupled fluid-structure run from a config file")
    run.add_argument("config")
    run.add_argument("--restart", help="checkpoint file to resume from")

    cfd = sub.add_parser("cfd", help="flow-only run with the cable held rigid")
    cfd.add_argument("config")
    cfd.add_argument("--restart", help="checkpoint file to resume from")

    st = sub.add_parser("shocktube", help="exact Riemann solution tables")
    st.add_argument("--gamma", type=float, default=1.4)
    st.add_argument("-o", "--outdir", default=".")

    mesh = sub.add_parser("mesh", help="generate, refine or inspect meshes")
    act = mesh.add_subparsers(dest="action", required=True)
    gen = act.add_parser("generate", help="structured simplex box mesh")
    gen.add_argument("--bounds", required=True, help="'x0 y0 z0; x1 y1 z1'")
    gen.add_argument("--resolution", required=True, help="'nx ny nz'")
    gen.add_argument("--tags", default="", help="side tags, e.g. 'xmin=inflow,xmax=outflow'")
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--vtk", help="also write a VTK copy")
    ref = act.add_parser("refine", help="uniform bisection rounds")
    ref.add_argument("input")
    ref.add_argument("-o", "--output", required=True)
    ref.add_argument("--rounds", type=int, default=1)
    ref.add_argument("--vtk", help="also write a VTK copy")
    ins = act.add_parser("inspect", help="print size and quality numbers")
    ins.add_argument("input")

    chk = sub.add_parser("check", help="conservation/property audit of a config")
    chk.add_argument("config")
    chk.add_argument("--seed", type=int, default=0,
                     help="seed for the randomized audit inputs")
    return p


def _cmd_run(args, rigid):
    config = load_config(args.config)
    sim = load_checkpoint(args.restart, config) if args.restart else None
    sim, history, files = run_staggered(config, rigid=rigid, sim=sim)
    if config.output.figures and history.rows:
        files += render_history_figures(files[0])
    for f in files:
        print(f)
    return 0


def _cmd_shocktube(args):
    if args.gamma <= 1.0:
        raise ConfigError(f"--gamma must exceed 1, got {args.gamma}")
    gas = GasModel(gamma=args.gamma, gas_constant=287.0)
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table = outdir / "shocktube.csv"
    with open(table, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["case", "gamma", "rho_l", "v_l", "p_l", "rho_r", "v_r", "p_r",
                    "p_star", "v_star"])
        for name, left, right, _ in _SHOCKTUBE_CASES:
            sol = solve_riemann(PrimitiveState(*left), PrimitiveState(*right), gas)
            w.writerow([name, args.gamma, *left, *right,
                        format(sol.p_star, ".12g"), format(sol.u_star, ".12g")])
            print(f"{name}: p* = {sol.p_star:.6g}, v* = {sol.u_star:.6g}")
    profile = outdir / "shocktube_sod_profile.csv"
    name, left, right, t = _SHOCKTUBE_CASES[0]
    sol = solve_riemann(PrimitiveState(*left), PrimitiveState(*right), gas)
    x = np.linspace(-0.5, 0.5, 401)
    rho, v, p = sol.sample(x / t)
    with open(profile, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "rho", "v", "p"])
        for row in zip(x, rho, v, p):
            w.writerow([format(val, ".12g") for val in row])
    print(table)
    print(profile)
    return 0


def _parse_cli_points(raw, what):
    rows = [r.split() for r in raw.split(";") if r.strip()]
    try:
        return [[float(v) for v in r] for r in rows]
    except ValueError:
        raise ConfigError(f"malformed {what}: '{raw}'") from None


def _cmd_mesh(args):
    if args.action == "generate":
        bounds = _parse_cli_points(args.bounds, "--bounds")
        if len(bounds) != 2 or any(len(b) != 3 for b in bounds):
            raise ConfigError("--bounds needs 'x0 y0 z0; x1 y1 z1'")
        res = _parse_cli_points(args.resolution, "--resolution")[0]
        tags = {}
        for part in filter(None, (s.strip() for s in args.tags.split(","))):
            side, _, tag = part.partition("=")
            tags[side.strip()] = tag.strip()
        try:
            mesh = build_box_mesh((bounds[0], bounds[1]), [int(r) for r in res],
                                  side_tags=tags or None)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"mesh generation failed: {exc}") from None
        save_mesh(mesh, args.output)
        print(args.output)
        if args.vtk:
            write_vtk_mesh(args.vtk, mesh)
            print(args.vtk)
        return 0
    if args.action == "refine":
        mesh = load_mesh(args.input)
        for _ in range(max(0, args.rounds)):
            mesh = refine_edges(mesh, mesh.edges)
        save_mesh(mesh, args.output)
        print(args.output)
        if args.vtk:
            write_vtk_mesh(args.vtk, mesh)
            print(args.vtk)
        return 0
    mesh = load_mesh(args.input)
    vol = mesh.volumes
    print(f"nodes: {mesh.n_nodes}")
    print(f"elements: {mesh.n_tets}")
    print(f"boundary faces: {len(mesh.boundary_faces)}")
    print(f"total volume: {vol.sum():.12g}")
    print(f"element volume min/max: {vol.min():.6g} / {vol.max():.6g}")
    print(f"min dihedral angle [deg]: {np.degrees(mesh.min_dihedral_angle()):.4f}")
    print(f"conforming: {check_conformity(mesh)}")
    return 0


def _cmd_check(args):
    config = load_config(args.config)
    results = run_property_audit(config, seed=args.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        failed += not r.ok
        print(f"{status} {r.name}: {r.detail}")
    print(f"{len(results) - failed} of {len(results)} checks passed")
    return 0 if failed == 0 else 2


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "run":
            return _cmd_run(args, rigid=False)
        if args.command == "cfd":
            return _cmd_run(args, rigid=True)
        if args.command == "shocktube":
            return _cmd_shocktube(args)
        if args.command == "mesh":
            return _cmd_mesh(args)
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CableFsiError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
