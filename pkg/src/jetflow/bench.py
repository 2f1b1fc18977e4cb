"""Strong-scaling sweeps over a mesh family.

For each mesh and worker count the harness partitions the grid in memory,
runs a short integration, and keeps the mean wall time per iteration after
discarding the first few (compilation and cache warmup).  Speedup is
measured against a starting worker count s that need not be 1, mirroring
timings where the smallest meshes fit on one worker but the largest do
not:

    speedup(N)   = T(s) / T(N)
    efficiency   = speedup / N        (classic, assumes s = 1 is ideal)
    shifted      = speedup * s / N    (normalizes the starting point)

Partition selection prefers azimuthal cuts: among the divisor pairs
npx * npz = N that keep every block at least MIN_BLOCK points wide, the
largest feasible npz wins.  Azimuthal blocks carry no physical-boundary
work, so this spreads cost most evenly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, FlowConfig, coerce_section, read_keyvalues, section
from .integrate import RunPlan, run_processes, run_threads
from .meshgen import GlobalGrid, GridSpec, generate
from .partition import PartitionError, PartitionSpec, build_topology

__all__ = ["MeshCase", "SweepPlan", "BenchRow", "list_feasible",
           "choose_partition", "measure", "attach_metrics", "write_csv",
           "read_csv", "plot_speedup", "plot_efficiency", "run_sweep", "report"]

DEFAULT_WORKERS = (1, 2, 4, 8)


@dataclass(frozen=True)
class MeshCase:
    ident: str
    grid: GridSpec

    @property
    def nodes(self) -> int:
        g = self.grid
        return g.n_axial * g.n_radial * g.n_azimuthal


@dataclass(frozen=True)
class SweepPlan:
    """One benchmark campaign; see the ``sweep.*`` and ``mesh.<id>.*`` keys."""

    meshes: tuple[MeshCase, ...]
    workers: tuple[int, ...] = DEFAULT_WORKERS
    iterations: int = 20
    discard: int = 5
    start_workers: int = 1
    transport: str = "threads"
    cfg: FlowConfig = FlowConfig()

    def __post_init__(self):
        if not self.meshes:
            raise ConfigError("sweep needs at least one mesh")
        if self.iterations <= self.discard:
            raise ConfigError("sweep.iterations must exceed sweep.discard")
        if self.start_workers not in self.workers:
            raise ConfigError(
                f"sweep.start_workers {self.start_workers} missing from worker list")
        if self.transport not in ("threads", "processes"):
            raise ConfigError(f"unknown transport {self.transport!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepPlan":
        src = str(path)
        mapping = read_keyvalues(path)
        sweep = coerce_section(section(mapping, "sweep"), {
            "workers": str, "iterations": int, "discard": int,
            "start_workers": int, "transport": str,
        }, src)
        if "workers" in sweep:
            sweep["workers"] = tuple(
                int(tok) for tok in sweep["workers"].replace(",", " ").split())
        by_id: dict[str, dict] = {}
        for key, item in section(mapping, "mesh").items():
            ident, _, fld = key.partition(".")
            if not fld:
                raise ConfigError(f"{src}: mesh key {key!r} needs mesh.<id>.<field>")
            by_id.setdefault(ident, {})[fld] = item
        meshes = tuple(MeshCase(ident, GridSpec.from_mapping(sec, src))
                       for ident, sec in sorted(by_id.items()))
        flow = section(mapping, "flow")
        cfg = FlowConfig.from_mapping(flow, src) if flow else FlowConfig()
        return cls(meshes=meshes, cfg=cfg, **sweep)


def list_feasible(grid: GridSpec, workers: int) -> list[PartitionSpec]:
    """Divisor pairs npx * npz = workers that satisfy the block minimum."""
    out = []
    for npz in range(1, workers + 1):
        if workers % npz:
            continue
        part = PartitionSpec(workers // npz, npz)
        try:
            build_topology(grid, part)
        except PartitionError:
            continue
        out.append(part)
    return out


def choose_partition(grid: GridSpec, workers: int) -> PartitionSpec:
    """The feasible pair with the most azimuthal cuts."""
    feasible = list_feasible(grid, workers)
    if not feasible:
        raise PartitionError(
            f"no feasible decomposition of {grid.n_axial}x{grid.n_radial}"
            f"x{grid.n_azimuthal} over {workers} workers")
    return max(feasible, key=lambda p: p.npz)


@dataclass
class BenchRow:
    mesh: str
    nodes: int
    workers: int
    npx: int
    npz: int
    mean_iter_s: float
    speedup: float = float("nan")
    efficiency: float = float("nan")
    efficiency_shifted: float = float("nan")


def mean_iteration_seconds(iter_seconds, discard: int) -> float:
    arr = np.asarray(iter_seconds, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no iteration timings recorded")
    if arr.size > discard:
        arr = arr[discard:]
    return float(arr.mean())


def _timing_runner(plan: SweepPlan):
    run = run_threads if plan.transport == "threads" else run_processes
    rp = RunPlan(iterations=plan.iterations)

    def runner(cfg: FlowConfig, grid: GlobalGrid, topo) -> list[float]:
        return run(cfg, rp, grid, topo).iter_seconds

    return runner


def measure(plan: SweepPlan, runner=None) -> list[BenchRow]:
    """Time every (mesh, workers) cell; ``runner`` returns per-iteration seconds."""
    if runner is None:
        runner = _timing_runner(plan)
    rows = []
    for case in plan.meshes:
        grid = generate(case.grid)
        for n in plan.workers:
            part = choose_partition(case.grid, n)
            topo = build_topology(case.grid, part)
            seconds = runner(plan.cfg, grid, topo)
            rows.append(BenchRow(
                mesh=case.ident, nodes=case.nodes, workers=n,
                npx=part.npx, npz=part.npz,
                mean_iter_s=mean_iteration_seconds(seconds, plan.discard)))
    return rows


def attach_metrics(rows: list[BenchRow], start_workers: int) -> list[BenchRow]:
    """Fill speedup/efficiency columns in place against the starting column."""
    ref = {}
    for row in rows:
        if row.workers == start_workers:
            ref[row.mesh] = row.mean_iter_s
    for row in rows:
        if row.mesh not in ref:
            raise ValueError(
                f"mesh {row.mesh!r} has no timing at {start_workers} worker(s)")
        sp = ref[row.mesh] / row.mean_iter_s
        row.speedup = sp
        row.efficiency = sp / row.workers
        row.efficiency_shifted = sp * start_workers / row.workers
    return rows


_CSV_FIELDS = ("mesh", "nodes", "workers", "npx", "npz", "mean_iter_s",
               "speedup", "efficiency", "efficiency_shifted")


def write_csv(rows: list[BenchRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for row in rows:
            writer.writerow([row.mesh, row.nodes, row.workers, row.npx,
                             row.npz, repr(row.mean_iter_s), repr(row.speedup),
                             repr(row.efficiency), repr(row.efficiency_shifted)])


def read_csv(path: str | Path) -> list[BenchRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(BenchRow(
                mesh=rec["mesh"], nodes=int(rec["nodes"]),
                workers=int(rec["workers"]), npx=int(rec["npx"]),
                npz=int(rec["npz"]), mean_iter_s=float(rec["mean_iter_s"]),
                speedup=float(rec["speedup"]),
                efficiency=float(rec["efficiency"]),
                efficiency_shifted=float(rec["efficiency_shifted"])))
    return rows


def _by_mesh(rows):
    groups: dict[str, list[BenchRow]] = {}
    for row in rows:
        groups.setdefault(row.mesh, []).append(row)
    for mesh in groups:
        groups[mesh].sort(key=lambda r: r.workers)
    return dict(sorted(groups.items()))


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_speedup(rows: list[BenchRow], path: str | Path,
                 start_workers: int | None = None) -> None:
    plt = _pyplot()
    groups = _by_mesh(rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    all_n = sorted({r.workers for r in rows})
    if start_workers is None:
        start_workers = min(all_n)
    ax.plot(all_n, [n / start_workers for n in all_n], "k--", lw=1.0,
            label="ideal")
    for mesh, grp in groups.items():
        ax.plot([r.workers for r in grp], [r.speedup for r in grp],
                marker="o", label=f"mesh {mesh}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xticks(all_n, [str(n) for n in all_n])
    ax.set_xlabel("workers")
    ax.set_ylabel("speedup")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_efficiency(rows: list[BenchRow], path: str | Path) -> None:
    plt = _pyplot()
    groups = _by_mesh(rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    all_n = sorted({r.workers for r in rows})
    ax.axhline(1.0, color="k", ls="--", lw=1.0, label="ideal")
    for mesh, grp in groups.items():
        ax.plot([r.workers for r in grp], [r.efficiency_shifted for r in grp],
                marker="o", label=f"mesh {mesh}")
    ax.set_xscale("log", base=2)
    ax.set_xticks(all_n, [str(n) for n in all_n])
    ax.set_ylim(bottom=0.0)
    ax.set_xlabel("workers")
    ax.set_ylabel("parallel efficiency")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def run_sweep(plan: SweepPlan, out_dir: str | Path,
              runner=None) -> list[BenchRow]:
    """Measure, derive metrics, and write timings.csv plus SVG plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = attach_metrics(measure(plan, runner), plan.start_workers)
    write_csv(rows, out / "timings.csv")
    plot_speedup(rows, out / "speedup.svg", plan.start_workers)
    plot_efficiency(rows, out / "efficiency.svg")
    return rows


def report(csv_path: str | Path, out_dir: str | Path) -> list[BenchRow]:
    """Regenerate the plots from a previously written timings.csv."""
    rows = read_csv(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot_speedup(rows, out / "speedup.svg", _infer_start(rows))
    plot_efficiency(rows, out / "efficiency.svg")
    return rows


def _infer_start(rows: list[BenchRow]) -> int:
    """The starting worker count is where the stored speedup equals one."""
    for row in rows:
        if abs(row.speedup - 1.0) < 1e-12:
            return row.workers
    return min(r.workers for r in rows)
