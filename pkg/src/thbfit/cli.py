"""Command line interface: ``thbfit fit`` and ``thbfit synth``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import io
from .adaptive import CONVERGED, fit
from .synth import SHAPES, synthesize

log = logging.getLogger("thbfit")


def cmd_fit(args) -> int:
    try:
        cloud = io.read_cloud(args.input)
        config = io.read_config(args.config, cloud)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.threads < 1 or args.sample_grid < 2:
        print("error: --threads must be >= 1 and --sample-grid >= 2", file=sys.stderr)
        return 1
    try:
        surface, report = fit(cloud, config, threads=args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out_surface:
        io.write_obj(args.out_surface, *io.sample_surface(surface, args.sample_grid))
    if args.out_mesh:
        io.write_mesh_dump(args.out_mesh, surface.mesh)
    if args.out_report:
        io.write_report(args.out_report, report)
        if args.figures:
            from .plotting import render_report_figures
            render_report_figures(args.out_report, surface.mesh, cloud.params, report)
    last = report.final
    print(f"{report.termination}: levels={last.levels} dof={last.dof} "
          f"within={100 * last.within_fraction:.2f}% max_error={last.max_error:.6g} m "
          f"(R={report.bbox_diagonal:.6g} m)")
    for key, msg in report.warnings():
        log.warning("mother %s: %s", key, msg)
    return 0 if report.termination == CONVERGED else 2


def cmd_synth(args) -> int:
    try:
        cloud, info = synthesize(args.shape, args.n, noise=args.noise, voids=args.voids,
                                 cluster=args.cluster, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    comment = (f"thbfit synth shape={args.shape} n={args.n} noise={args.noise} "
               f"voids={args.voids} cluster={args.cluster} seed={args.seed}")
    for k, box in enumerate(info.voids):
        u0, u1, v0, v1 = (float(b) for b in box)
        comment += f"\nvoid {k}: u in [{u0!r}, {u1!r}], v in [{v0!r}, {v1!r}]"
    try:
        io.write_cloud(args.out, cloud, comment)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thbfit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="adaptive THB-spline fit of a point cloud")
    p.add_argument("--input", required=True, help="cloud file (x y z u v per line)")
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--out-surface", help="sampled surface, OBJ triangle mesh")
    p.add_argument("--out-mesh", help="hierarchical mesh dump (JSON)")
    p.add_argument("--out-report", help="fit report (CSV)")
    p.add_argument("--sample-grid", type=int, default=128, metavar="N")
    p.add_argument("--seed", type=int, default=0,
                   help="accepted for symmetry with synth; fitting is deterministic")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--figures", action="store_true",
                   help="also write PNG figures next to the report")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", help="write a synthetic point cloud")
    p.add_argument("--shape", choices=SHAPES, required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--noise", type=float, default=0.0, help="noise std dev [m]")
    p.add_argument("--voids", type=int, default=0)
    p.add_argument("--cluster", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
