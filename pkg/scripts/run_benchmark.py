#!/usr/bin/env python3
"""Strong-scaling sweep over one or more meshes on this machine.

Each (mesh, worker count) cell partitions the grid, integrates a short
burst, and keeps the mean wall time per iteration after a warmup discard.
Timings, speedup, and efficiency land in ``timings.csv`` plus SVG plots
under the output directory.  Worker counts above the physical core count
only measure oversubscription, so size the list to the machine.
"""

import argparse
import os
import sys
from pathlib import Path

from jetflow.bench import MeshCase, SweepPlan, run_sweep
from jetflow.core import FlowConfig
from jetflow.meshgen import GridSpec


def parse_mesh(token: str) -> GridSpec:
    try:
        nx, nr, nz = (int(t) for t in token.lower().split("x"))
    except ValueError:
        raise SystemExit(f"--mesh wants NAXIALxNRADIALxNAZIMUTHAL, got {token!r}")
    return GridSpec(nx, nr, nz)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("bench-out"))
    ap.add_argument("--mesh", action="append", metavar="NXxNRxNZ",
                    help="repeatable; default 32x32x91")
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--start-workers", type=int, default=None,
                    help="speedup baseline; defaults to the smallest count")
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--discard", type=int, default=5)
    ap.add_argument("--transport", choices=("threads", "processes"),
                    default="threads")
    ap.add_argument("--dt", type=float, default=1e-4)
    args = ap.parse_args(argv)

    tokens = args.mesh or ["32x32x91"]
    meshes = tuple(MeshCase(t.lower(), parse_mesh(t)) for t in tokens)
    start = args.start_workers or min(args.workers)
    plan = SweepPlan(meshes=meshes, workers=tuple(sorted(args.workers)),
                     iterations=args.iterations, discard=args.discard,
                     start_workers=start, transport=args.transport,
                     cfg=FlowConfig(dt=args.dt))

    cores = os.cpu_count() or 1
    if max(args.workers) > cores:
        print(f"note: {max(args.workers)} workers on {cores} core(s); "
              f"counts above the core count measure oversubscription")

    rows = run_sweep(plan, args.out)
    print(f"{'mesh':<12}{'workers':>8}{'s/iter':>12}{'speedup':>9}{'eff':>7}")
    for r in rows:
        print(f"{r.mesh:<12}{r.workers:>8d}{r.mean_iter_s:>12.5f}"
              f"{r.speedup:>9.3f}{r.efficiency_shifted:>7.3f}")
    print(f"wrote {args.out / 'timings.csv'}, speedup.svg, efficiency.svg")
    return 0


if __name__ == "__main__":
    sys.exit(main())
