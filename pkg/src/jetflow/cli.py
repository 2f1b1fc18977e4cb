"""Command line front door.

Subcommands mirror the workflow: ``partition`` writes per-rank mesh blocks
and a manifest, ``run`` integrates over them, ``stats`` reduces snapshot
series to jet profiles, ``bench`` executes a strong-scaling sweep, and
``report`` regenerates plots from stored timings.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .core import (ConfigError, FlowConfig, InvalidStateError, coerce_section,
                   primitive_from_conservative, read_keyvalues, section)
from .exchange import ExchangeError
from .integrate import RunPlan, RunResult, run_processes, run_threads
from .meshgen import GridSpec, MeshError, generate
from .partition import PartitionError, PartitionSpec
from .stats import azimuthal_average, extract_profile, potential_core, series_moments
from .storage import (SnapshotSeries, StorageError, export_vtk,
                      load_partition_set, write_partition_set)

log = logging.getLogger(__name__)

_FAILURES = (ConfigError, InvalidStateError, StorageError, PartitionError,
             MeshError, ExchangeError, ValueError, OSError)


def cmd_partition(args) -> int:
    mapping = read_keyvalues(args.config)
    src = str(args.config)
    spec = GridSpec.from_mapping(section(mapping, "grid"), src)
    parts = PartitionSpec.from_mapping(section(mapping, "partition"), src)
    pset = write_partition_set(args.out, spec, parts)
    print(f"grid {spec.n_axial} x {spec.n_radial} x {spec.n_azimuthal}, "
          f"{parts.npx} x {parts.npz} = {pset.topo.workers} block(s)")
    for blk in pset.topo.blocks:
        print(f"  rank {blk.rank:3d}: axial [{blk.ax_lo}, {blk.ax_hi}), "
              f"azimuthal [{blk.az_lo}, {blk.az_hi})")
    print(f"manifest: {pset.manifest}")
    return 0


def _run_plan(args, mapping, src: str) -> RunPlan:
    kwargs = coerce_section(section(mapping, "run"), RunPlan._SCHEMA, src)
    if args.iterations is not None:
        kwargs["iterations"] = args.iterations
    if args.out is not None:
        kwargs["output_dir"] = str(args.out)
    if args.restart is not None:
        kwargs["restart_from"] = str(args.restart)
    if "iterations" not in kwargs:
        raise ConfigError("set run.iterations in the config or pass --iterations")
    return RunPlan(**kwargs)


def cmd_run(args) -> int:
    mapping = read_keyvalues(args.config) if args.config else {}
    src = str(args.config) if args.config else "<defaults>"
    cfg = FlowConfig.from_mapping(section(mapping, "flow"), src)
    plan = _run_plan(args, mapping, src)
    pset = load_partition_set(args.mesh)
    runner = run_threads if args.transport == "threads" else run_processes
    result: RunResult = runner(cfg, plan, pset)
    print(f"status: {result.status}")
    print(f"iterations: {result.iterations_done}, simulated time: {result.time:.6g}")
    if result.iter_seconds:
        arr = np.asarray(result.iter_seconds)
        steady = arr[5:] if arr.size > 5 else arr
        print(f"wall time/iteration: {steady.mean():.4f} s over {arr.size} iteration(s)")
    if result.supersonic_exit_nodes:
        print(f"supersonic exit nodes seen: {result.supersonic_exit_nodes}")
    if result.status == "diverged":
        where = ", ".join(f"rank {r} at node {n}" for r, n in result.bad_nodes)
        print(f"diverged during iteration {result.diverged_at}: {where}",
              file=sys.stderr)
        return 3
    if args.vtk:
        w = primitive_from_conservative(result.q_global, cfg)
        coords = generate(pset.spec).coords_full()
        export_vtk(args.vtk, coords, {
            "density": w[0], "pressure": w[4], "temperature": w[5],
            "velocity": w[1:4],
        })
        print(f"wrote {args.vtk}")
    return 0


def _series_path(run_dir: Path, rank: int) -> Path:
    return run_dir / "snapshots" / f"rank-{rank:04d}.series"


def cmd_stats(args) -> int:
    pset = load_partition_set(args.mesh)
    topo = pset.topo
    cfg = FlowConfig.from_file(args.config) if args.config else FlowConfig()
    run_dir = Path(args.run)
    shape = (4, topo.n_axial, topo.n_radial, topo.n_azimuthal)
    mean = np.zeros(shape)
    rms = np.zeros(shape)
    count = None
    for rank in range(topo.workers):
        series = SnapshotSeries.open(_series_path(run_dir, rank))

        def samples():
            for index, (headers, arrays) in enumerate(series.records()):
                if index >= args.skip:
                    yield arrays["q"], cfg.gamma

        mom = series_moments(samples())
        if mom.count == 0:
            raise StorageError(f"rank {rank}: no snapshot records after "
                               f"skipping {args.skip}")
        if count is None:
            count = mom.count
        elif count != mom.count:
            raise StorageError(f"rank {rank}: {mom.count} records, "
                               f"rank 0 has {count}")
        blk = topo.block(rank)
        sl = np.s_[:, blk.ax_lo:blk.ax_hi, :, blk.az_lo:blk.az_hi]
        mean[sl] = mom.mean
        rms[sl] = mom.rms
    grid = generate(pset.spec)
    u_bar = azimuthal_average(mean[0])
    u_rms = azimuthal_average(rms[0])
    core = potential_core(grid.x_axial, grid.r_radial, u_bar, cfg.u_jet)
    targets = args.x if args.x else [2.5, 5.0]
    profiles = [extract_profile(grid.x_axial, grid.r_radial, u_bar, x,
                                scale=cfg.u_jet)
                for x in targets]
    rms_profiles = [extract_profile(grid.x_axial, grid.r_radial, u_rms, x,
                                    scale=cfg.u_jet)
                    for x in targets]

    out = Path(args.out) if args.out else run_dir / "stats"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "profiles.csv", "w") as fh:
        names = [f"u_mean_x{p.x_target:g}" for p in profiles]
        names += [f"u_rms_x{p.x_target:g}" for p in rms_profiles]
        fh.write("r," + ",".join(names) + "\n")
        for j in range(grid.r_radial.size):
            vals = [repr(float(p.values[j])) for p in profiles + rms_profiles]
            fh.write(f"{float(grid.r_radial[j])!r}," + ",".join(vals) + "\n")
    with open(out / "core.csv", "w") as fh:
        fh.write("x,core_radius\n")
        for i in range(grid.x_axial.size):
            fh.write(f"{float(grid.x_axial[i])!r},{float(core.radii[i])!r}\n")
    print(f"records used: {count} per rank (skipped {args.skip})")
    for p in profiles:
        print(f"profile at x = {p.x_actual:.4f} (target {p.x_target:g}), "
              f"peak <u>/U_jet = {p.values.max():.4f}")
    print(f"potential core length: {core.length:.4f}")
    print(f"wrote {out / 'profiles.csv'} and {out / 'core.csv'}")
    return 0


def _print_rows(rows) -> None:
    print(f"{'mesh':<8}{'workers':>8}{'npx':>5}{'npz':>5}{'s/iter':>13}"
          f"{'speedup':>9}{'eff':>7}{'eff*s':>7}")
    for r in rows:
        print(f"{r.mesh:<8}{r.workers:>8d}{r.npx:>5d}{r.npz:>5d}"
              f"{r.mean_iter_s:>13.6f}{r.speedup:>9.3f}{r.efficiency:>7.3f}"
              f"{r.efficiency_shifted:>7.3f}")


def cmd_bench(args) -> int:
    plan = bench_mod.SweepPlan.from_file(args.config)
    rows = bench_mod.run_sweep(plan, args.out)
    _print_rows(rows)
    print(f"wrote {Path(args.out) / 'timings.csv'} and plots")
    return 0


def cmd_report(args) -> int:
    rows = bench_mod.report(args.csv, args.out)
    _print_rows(rows)
    print(f"regenerated plots under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jetflow",
        description="structured compressible jet solver and scaling harness")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="write per-rank mesh blocks")
    p.add_argument("--config", required=True, type=Path,
                   help="file with grid.* and partition.* keys")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", help="integrate over a partition set")
    p.add_argument("--mesh", required=True, type=Path,
                   help="path to a partition manifest.txt")
    p.add_argument("--config", type=Path, help="file with flow.* and run.* keys")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", type=Path, help="run output directory")
    p.add_argument("--restart", type=Path, help="checkpoint directory to resume")
    p.add_argument("--transport", default="threads",
                   choices=("threads", "processes"))
    p.add_argument("--vtk", type=Path, help="write the final field as legacy VTK")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="reduce snapshots to jet profiles")
    p.add_argument("--run", required=True, type=Path, help="run output directory")
    p.add_argument("--mesh", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--x", type=float, action="append",
                   help="axial station(s) in diameters; default 2.5 and 5.0")
    p.add_argument("--skip", type=int, default=0,
                   help="snapshot records to drop from the front")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="strong-scaling sweep")
    p.add_argument("--config", required=True, type=Path,
                   help="file with sweep.* and mesh.<id>.* keys")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="plots from stored timings")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _FAILURES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
