"""Command line entry point: ``ctstokes run | mesh-info | selftest``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import (
    ConfigError,
    all_rows,
    build_system,
    parse_config,
    run_single,
    write_csv,
    write_gnuplot,
)
from .linalg import SolverError
from .mesh import Rect, build_structured_mesh, mesh_statistics

log = logging.getLogger("ctstokes")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctstokes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the effectivity sweep and write CSV")
    run.add_argument("--config", type=Path, help="flat 'key = value' file")
    run.add_argument("--lambda", dest="lam")
    run.add_argument("--T")
    run.add_argument("--dt", help="comma-separated step sizes")
    run.add_argument("--nx")
    run.add_argument("--ny")
    run.add_argument("--include-linf", dest="include_linf")
    run.add_argument("--out")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="any other config key")

    mi = sub.add_parser("mesh-info", help="print mesh statistics")
    mi.add_argument("--nx", type=int, default=48)
    mi.add_argument("--ny", type=int, default=48)
    mi.add_argument("--dump", type=Path, help="write plain-text mesh to this path")

    sub.add_parser("selftest", help="run the oracle/property checks")
    return p


def _cmd_run(args) -> int:
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    overrides = {}
    for key in ("lam", "T", "dt", "nx", "ny", "include_linf", "out"):
        val = getattr(args, key)
        if val is not None:
            overrides["lambda" if key == "lam" else key] = val
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    try:
        config = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(config.out)
    rows = []
    status = 0
    try:
        system = build_system(config)
        for dt in config.dt:
            log.info("dt=%g", dt)
            rows.extend(run_single(system, config, dt).rows)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = 1
    try:
        write_csv(rows, out)
        write_gnuplot(rows, out.with_suffix(".eff2.dat"))
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return 1
    return status


def _cmd_mesh_info(args) -> int:
    try:
        mesh = build_structured_mesh(Rect(), args.nx, args.ny)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    amin, amax, total = mesh_statistics(mesh)
    print(f"vertices {mesh.n_vertices}")
    print(f"edges {mesh.n_edges}")
    print(f"triangles {mesh.n_triangles}")
    print(f"boundary_vertices {int(mesh.boundary_vertex.sum())}")
    print(f"velocity_dofs {2 * (mesh.n_vertices + mesh.n_edges)}")
    print(f"pressure_dofs {mesh.n_vertices}")
    print(f"area min {amin:.17g} max {amax:.17g} total {total:.17g}")
    if args.dump:
        args.dump.write_text(mesh.to_text(), encoding="utf-8")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return {"run": _cmd_run, "mesh-info": _cmd_mesh_info, "selftest": _cmd_selftest}[
        args.command
    ](args)


if __name__ == "__main__":
    sys.exit(main())
