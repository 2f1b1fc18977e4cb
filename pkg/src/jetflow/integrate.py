"""Five-stage explicit time marching across SPMD workers.

Each worker advances its extended block through the low-storage scheme

    q_s = q0 - alpha_s dt RHS(q_{s-1}),  alpha = (1/4, 1/6, 3/8, 1/2, 1)

with a fixed per-stage phase order: barrier, rhs, update, bc, exchange.
The stage barrier max-reduces an int flag; rank 0 raises the wall-clock
stop flag at the first stage so every worker halts on the same completed
iteration.  A positivity/NaN scan is folded into the stage update, and a
per-iteration commit barrier max-reduces the divergence flag so all
workers abort together while the iteration base ``q0`` still holds the
last valid state, which is then checkpointed.

Workers run either as threads over the in-process transport (the default;
compute kernels release the GIL) or as forked processes over the socket
transport.  The run starts from quiescent ambient (or a checkpoint), with
one boundary application and halo exchange before the first iteration.
"""

from __future__ import annotations

import logging
import os
import threading
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boundary import BoundarySet
from .core import ConfigError, FlowConfig, coerce_section, conservative_from_primitive
from .exchange import HaloExchanger, ThreadGroup, SocketTransport, ring_allgather
from .meshgen import GHOST, CurvilinearMesh, GlobalGrid, GridSpec, compute_metrics, generate
from .numerics import Scratch, assemble_rhs, owned_region, update_stage
from .partition import PartitionSpec, PartitionTopology, build_topology
from .stats import accumulate_moments
from .storage import (PartitionSet, mesh_block_headers_check, read_checkpoint,
                      read_mesh_file, require_compatible, write_checkpoint,
                      SnapshotSeries)

__all__ = ["RK_ALPHAS", "RkScheme", "RunPlan", "RunResult", "run_threads",
           "run_processes", "initial_condition", "block_mesh", "warmup"]

log = logging.getLogger(__name__)

RK_ALPHAS = (0.25, 1.0 / 6.0, 0.375, 0.5, 1.0)

STATUS_OK = 0
STATUS_WALL = 1
STATUS_DIVERGED = 2

PHASES = ("barrier", "rhs", "update", "bc", "exchange")


@dataclass(frozen=True)
class RkScheme:
    """The five-stage scheme and its linear amplification polynomial."""

    alphas: tuple[float, ...] = RK_ALPHAS

    def stability_coefficients(self) -> np.ndarray:
        """Ascending coefficients of g(z) for the model problem dq/dt = mu q."""
        p = np.array([1.0])
        for a in self.alphas:
            p = np.concatenate([[1.0], a * p])
        return p

    def amplification(self, z):
        c = self.stability_coefficients()
        return np.polyval(c[::-1], z)


@dataclass(frozen=True)
class RunPlan:
    """What to run and what to write; see the ``run.*`` config section."""

    iterations: int
    wall_clock_limit: float | None = None
    snapshot_every: int = 0
    checkpoint_every: int = 0
    stats_every: int = 0
    output_dir: str | None = None
    restart_from: str | None = None
    freeze_dissipation: bool = False
    trace_phases: bool = False
    log_every: int = 0

    _SCHEMA = {
        "iterations": int, "wall_clock_limit": float, "snapshot_every": int,
        "checkpoint_every": int, "stats_every": int, "output_dir": str,
        "restart_from": str, "freeze_dissipation": bool,
        "trace_phases": bool, "log_every": int,
    }

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("run.iterations must be >= 0")
        for name in ("snapshot_every", "checkpoint_every", "stats_every", "log_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"run.{name} must be >= 0")

    @classmethod
    def from_mapping(cls, sec, source: str = "<config>") -> "RunPlan":
        return cls(**coerce_section(sec, cls._SCHEMA, source))


@dataclass
class WorkerResult:
    rank: int
    status: int
    iterations_done: int
    t_sim: float
    diverged_at: int | None
    bad_node: tuple[int, int, int] | None
    iter_seconds: list[float]
    phase_seconds: dict[str, float]
    phase_trace: list[tuple[int, int, str]]
    supersonic_exit_nodes: int
    q_owned: np.ndarray
    moments: dict | None
    error: str | None = None


@dataclass
class RunResult:
    """Merged outcome of one multi-worker run."""

    status: str
    iterations_done: int
    time: float
    iter_seconds: list[float]
    phase_seconds: dict[str, float]
    phase_trace: list[tuple[int, int, str]]
    supersonic_exit_nodes: int
    q_global: np.ndarray
    moments: dict | None
    diverged_at: int | None = None
    bad_nodes: tuple = ()

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def initial_condition(mesh: CurvilinearMesh, cfg: FlowConfig) -> np.ndarray:
    """Quiescent-to-coflow ambient everywhere, ghosts included."""
    ni, nj, nk = mesh.shape
    cons = conservative_from_primitive(cfg.ambient_primitive(), cfg)
    q = np.empty((5, ni, nj, nk))
    q[:] = cons.reshape(5, 1, 1, 1)
    return q


def _coords_for(source, topo: PartitionTopology, rank: int) -> np.ndarray:
    if isinstance(source, PartitionSet):
        headers, coords = read_mesh_file(source.mesh_paths[rank])
        mesh_block_headers_check(headers, topo.block(rank),
                                 source.spec.digest(), source.mesh_paths[rank])
        return coords
    if isinstance(source, GlobalGrid):
        return source.coords_block(topo, rank)
    raise TypeError(f"unsupported mesh source {type(source).__name__}")


def _grid_spec(source) -> GridSpec:
    return source.spec


def block_mesh(source, topo: PartitionTopology, rank: int) -> CurvilinearMesh:
    """The ghost-extended metric block a worker integrates on."""
    blk = topo.block(rank)
    coords = _coords_for(source, topo, rank)
    ni_ext = blk.ni + 2 * GHOST
    nk_ext = blk.nk + 2 * GHOST
    return compute_metrics(
        coords, west_physical=blk.entrance, east_physical=blk.exit,
        axis_low=True, ghost_axial=GHOST,
        check_owned=owned_region((ni_ext, topo.n_radial, nk_ext)),
        global_origin=(blk.ax_lo - GHOST, 0, blk.az_lo - GHOST))


def _worker(rank: int, topo: PartitionTopology, cfg: FlowConfig, plan: RunPlan,
            source, transport) -> WorkerResult:
    blk = topo.block(rank)
    spec = _grid_spec(source)
    mesh = block_mesh(source, topo, rank)
    scratch = Scratch.allocate(mesh.shape)
    bnd = BoundarySet.for_block(cfg, mesh, spec.lip_radius,
                                blk.az_lo, blk.az_hi, topo.n_azimuthal)
    exch = HaloExchanger(topo, rank, transport)
    rk = RkScheme()

    out_dir = Path(plan.output_dir) if plan.output_dir else None
    meta = {
        "flow_digest": cfg.digest(), "grid_digest": spec.digest(),
        "npx": topo.npx, "npz": topo.npz, "rank": rank,
        "ax_lo": blk.ax_lo, "ax_hi": blk.ax_hi,
        "az_lo": blk.az_lo, "az_hi": blk.az_hi,
    }

    q = initial_condition(mesh, cfg)
    q0 = q.copy()
    start_iter = 0
    t_sim = 0.0
    if plan.restart_from:
        path = Path(plan.restart_from) / f"rank-{rank:04d}.jzsc"
        headers, q_saved, start_iter, t_sim = read_checkpoint(path)
        si, sj, sk = owned_region(mesh.shape)
        require_compatible(headers, meta, q_saved.shape,
                           (5, blk.ni, topo.n_radial, blk.nk), path)
        q[:, si, sj, sk] = q_saved

    def apply_bc(state):
        bnd.apply_local(state)
        partial, _ = bnd.centerline_partial(state)
        if topo.npz > 1:
            parts = ring_allgather(transport, blk.ring_prev, blk.ring_next,
                                   blk.pz, topo.npz, partial)
            total = parts[0].copy()
            for pz in range(1, topo.npz):
                total += parts[pz]
        else:
            total = partial
        bnd.apply_centerline(state, total / topo.n_az_distinct)

    apply_bc(q)
    exch.exchange(q)
    np.copyto(q0, q)

    si, sj, sk = owned_region(mesh.shape)

    def write_ckpt(directory: Path, state: np.ndarray, iteration: int, when: float):
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"rank-{rank:04d}.jzsc"
        tmp = path.with_suffix(".tmp")
        write_checkpoint(tmp, np.ascontiguousarray(state[:, si, sj, sk]),
                         iteration, when, meta)
        os.replace(tmp, path)

    series = None
    if plan.snapshot_every and out_dir is not None:
        snap_dir = out_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        series = SnapshotSeries.create(
            snap_dir / f"rank-{rank:04d}.series",
            dict(meta, dt=repr(cfg.dt)))
        series.append({"iteration": start_iter, "time": repr(t_sim)},
                      {"q": np.ascontiguousarray(q[:, si, sj, sk])})

    moments = None
    if plan.stats_every:
        shape = (4, mesh.shape[0], mesh.shape[1], mesh.shape[2])
        moments = {"count": 0, "mean": np.zeros(shape), "m2": np.zeros(shape)}

    iter_seconds: list[float] = []
    phase_seconds = {p: 0.0 for p in PHASES + ("commit",)}
    phase_trace: list[tuple[int, int, str]] = []
    pending = STATUS_OK
    bad_node = None
    status = STATUS_OK
    diverged_at = None
    iterations_done = 0
    t_start = time.monotonic()

    def mark(it, stage, name, t0):
        t1 = time.perf_counter()
        phase_seconds[name] += t1 - t0
        if plan.trace_phases:
            phase_trace.append((it, stage, name))
        return t1

    it = start_iter
    last_it = start_iter + plan.iterations
    while it < last_it:
        it_t0 = time.perf_counter()
        wall_stop = False
        for s, alpha in enumerate(rk.alphas):
            myflag = STATUS_OK
            if (rank == 0 and s == 0 and plan.wall_clock_limit is not None
                    and time.monotonic() - t_start >= plan.wall_clock_limit):
                myflag = STATUS_WALL
            t0 = time.perf_counter()
            flag = transport.sync(myflag)
            t0 = mark(it, s, "barrier", t0)
            if flag == STATUS_WALL and s == 0:
                wall_stop = True
                break
            rhs = assemble_rhs(q, mesh, cfg, scratch,
                               freeze_coefficients=plan.freeze_dissipation and s > 0)
            t0 = mark(it, s, "rhs", t0)
            bad = update_stage(q, q0, rhs, alpha * cfg.dt, cfg, mesh)
            t0 = mark(it, s, "update", t0)
            if bad[0] >= 0 and pending < STATUS_DIVERGED:
                pending = STATUS_DIVERGED
                bad_node = (bad[0] - GHOST + blk.ax_lo, bad[1],
                            bad[2] - GHOST + blk.az_lo)
            apply_bc(q)
            t0 = mark(it, s, "bc", t0)
            exch.exchange(q)
            mark(it, s, "exchange", t0)
        if wall_stop:
            status = STATUS_WALL
            break
        t0 = time.perf_counter()
        flag = transport.sync(pending)
        mark(it, -1, "commit", t0)
        if flag >= STATUS_DIVERGED:
            status = STATUS_DIVERGED
            diverged_at = it
            if out_dir is not None:
                write_ckpt(out_dir / "diverged", q0, it, t_sim)
            break
        np.copyto(q0, q)
        iterations_done += 1
        t_sim += cfg.dt
        it += 1
        iter_seconds.append(time.perf_counter() - it_t0)
        if plan.stats_every and it % plan.stats_every == 0:
            moments["count"] += 1
            accumulate_moments(q, cfg.gamma, float(moments["count"]),
                               moments["mean"], moments["m2"])
        if series is not None and it % plan.snapshot_every == 0:
            series.append({"iteration": it, "time": repr(t_sim)},
                          {"q": np.ascontiguousarray(q[:, si, sj, sk])})
        if plan.checkpoint_every and out_dir is not None \
                and it % plan.checkpoint_every == 0:
            write_ckpt(out_dir / "checkpoints", q, it, t_sim)
        if plan.log_every and rank == 0 and it % plan.log_every == 0:
            log.info("iteration %d/%d, %.3f s/iter", it, last_it,
                     iter_seconds[-1])

    if status != STATUS_DIVERGED and plan.checkpoint_every and out_dir is not None:
        write_ckpt(out_dir / "checkpoints", q, it, t_sim)

    out_moments = None
    if moments is not None and moments["count"] > 0:
        n = moments["count"]
        out_moments = {
            "count": n,
            "mean": moments["mean"][:, si, sj, sk].copy(),
            "rms": np.sqrt(moments["m2"][:, si, sj, sk] / n),
        }
    return WorkerResult(
        rank=rank, status=status, iterations_done=iterations_done, t_sim=t_sim,
        diverged_at=diverged_at, bad_node=bad_node, iter_seconds=iter_seconds,
        phase_seconds=phase_seconds, phase_trace=phase_trace,
        supersonic_exit_nodes=bnd.supersonic_exit_nodes,
        q_owned=np.ascontiguousarray(q0[:, si, sj, sk]), moments=out_moments)


def _merge_results(topo: PartitionTopology,
                   results: list[WorkerResult]) -> RunResult:
    results = sorted(results, key=lambda r: r.rank)
    n_ax, n_rad, n_az = topo.n_axial, topo.n_radial, topo.n_azimuthal
    q_global = np.zeros((5, n_ax, n_rad, n_az))
    moments_global = None
    if any(r.moments for r in results):
        moments_global = {
            "count": results[0].moments["count"],
            "mean": np.zeros((4, n_ax, n_rad, n_az)),
            "rms": np.zeros((4, n_ax, n_rad, n_az)),
        }
    for r in results:
        blk = topo.block(r.rank)
        sl = np.s_[:, blk.ax_lo:blk.ax_hi, :, blk.az_lo:blk.az_hi]
        q_global[sl] = r.q_owned
        if moments_global is not None and r.moments is not None:
            moments_global["mean"][sl] = r.moments["mean"]
            moments_global["rms"][sl] = r.moments["rms"]
    worst = max(r.status for r in results)
    status = {STATUS_OK: "ok", STATUS_WALL: "wall_clock",
              STATUS_DIVERGED: "diverged"}[worst]
    diverged_at = min((r.diverged_at for r in results if r.diverged_at is not None),
                      default=None)
    rank0 = results[0]
    done = min(r.iterations_done for r in results)
    return RunResult(
        status=status, iterations_done=done, time=rank0.t_sim,
        iter_seconds=rank0.iter_seconds, phase_seconds=rank0.phase_seconds,
        phase_trace=rank0.phase_trace,
        supersonic_exit_nodes=sum(r.supersonic_exit_nodes for r in results),
        q_global=q_global, moments=moments_global, diverged_at=diverged_at,
        bad_nodes=tuple((r.rank, r.bad_node) for r in results
                        if r.bad_node is not None))


def _require_supported(cfg: FlowConfig) -> None:
    # the filtered terms are carried with a zero model; no closure is wired in
    if cfg.sgs_enabled:
        raise ConfigError("no subgrid closure is implemented; "
                          "set flow.sgs_enabled = false")


def run_threads(cfg: FlowConfig, plan: RunPlan, source,
                topo: PartitionTopology | None = None) -> RunResult:
    """Run every worker as a thread over the in-process transport."""
    _require_supported(cfg)
    if topo is None:
        if not isinstance(source, PartitionSet):
            raise TypeError("topo is required unless source is a PartitionSet")
        topo = source.topo
    group = ThreadGroup(topo.workers)
    results: list[WorkerResult | None] = [None] * topo.workers
    errors: list[str] = []

    def target(rank: int):
        try:
            results[rank] = _worker(rank, topo, cfg, plan, source,
                                    group.transport(rank))
        except Exception:
            errors.append(f"worker {rank}:\n{traceback.format_exc()}")

    threads = [threading.Thread(target=target, args=(r,), name=f"worker-{r}")
               for r in range(topo.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise RuntimeError("worker failure\n" + "\n".join(errors))
    return _merge_results(topo, results)


def run_processes(cfg: FlowConfig, plan: RunPlan, source,
                  topo: PartitionTopology | None = None,
                  endpoints: list[str] | None = None) -> RunResult:
    """Run every worker as a forked process over the socket transport."""
    import multiprocessing as mp
    import tempfile
    from .exchange import default_unix_endpoints

    _require_supported(cfg)
    if topo is None:
        if not isinstance(source, PartitionSet):
            raise TypeError("topo is required unless source is a PartitionSet")
        topo = source.topo
    ctx = mp.get_context("fork")
    queue: mp.Queue = ctx.Queue()
    tmpdir = None
    if endpoints is None:
        tmpdir = tempfile.TemporaryDirectory(prefix="jetflow-ipc-")
        endpoints = default_unix_endpoints(topo.workers, tmpdir.name)

    def target(rank: int):
        try:
            with SocketTransport(rank, endpoints) as transport:
                res = _worker(rank, topo, cfg, plan, source, transport)
                transport.sync(0)  # keep peers alive until everyone is done
            queue.put((rank, res, None))
        except Exception:
            queue.put((rank, None, traceback.format_exc()))

    procs = [ctx.Process(target=target, args=(r,), name=f"worker-{r}")
             for r in range(topo.workers)]
    for p in procs:
        p.start()
    results: list[WorkerResult | None] = [None] * topo.workers
    errors = []
    for _ in range(topo.workers):
        rank, res, err = queue.get()
        if err:
            errors.append(f"worker {rank}:\n{err}")
        else:
            results[rank] = res
    for p in procs:
        p.join()
    if tmpdir is not None:
        tmpdir.cleanup()
    if errors:
        raise RuntimeError("worker failure\n" + "\n".join(errors))
    return _merge_results(topo, results)


def warmup() -> None:
    """Compile every jit kernel on a miniature case."""
    spec = GridSpec(n_axial=8, n_radial=6, n_azimuthal=9, length=4.0, height=3.0)
    cfg = FlowConfig(dt=1e-5)
    grid = generate(spec)
    topo = build_topology(spec, PartitionSpec(1, 1))
    plan = RunPlan(iterations=2)
    run_threads(cfg, plan, grid, topo)
