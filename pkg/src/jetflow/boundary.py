"""Physical boundary treatment.

Applied once per stage after the interior update, in a fixed order:
entrance, exit, far field, centerline.  Corner nodes shared by two planes
therefore end up with the later treatment.  All kernels write boundary
nodes from the adjacent interior state plus the prescribed exterior data;
ghost layers are refreshed by the halo exchange that follows.

The entrance and far field share one characteristic treatment based on the
two Riemann invariants ``u_n +- 2c/(gamma-1)`` evaluated from the interior
and exterior states against the outward normal.  The solved normal
velocity and sound speed are formed in a cancellation-free arrangement,

    u_n = (u_ni + u_ne)/2 + (c_i - c_e)/(gamma - 1)
    c   = (c_i + c_e)/2 + (gamma - 1)(u_ni - u_ne)/4

so a uniform stream equal to the exterior state is reproduced exactly;
entropy and tangential velocity come from the upwind side by the sign of
``u_n``.  At the entrance the exterior is the flat-hat jet state inside
the lip radius and the ambient coflow outside, with outward normal -x, so
a supersonic jet imposes the full state through the same algorithm.

The centerline row is the azimuthal mean of the first ring off the axis,
taken over distinct stations only (the closing station repeats the first)
in a fixed summation order so every decomposition reproduces it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import FlowConfig
from .meshgen import GHOST, CurvilinearMesh

__all__ = ["BoundarySet", "characteristic_state"]

log = logging.getLogger(__name__)

_TINY_NORMAL = 1e-30


@njit(inline="always")
def _char_state(gamma, ri, ui, vi, wi, pi, re, ue, ve, we, pe, nx, ny, nz):
    ci = math.sqrt(gamma * pi / ri)
    ce = math.sqrt(gamma * pe / re)
    uni = ui * nx + vi * ny + wi * nz
    une = ue * nx + ve * ny + we * nz
    un = 0.5 * (uni + une) + (ci - ce) / (gamma - 1.0)
    c = 0.5 * (ci + ce) + 0.25 * (gamma - 1.0) * (uni - une)
    if un >= c:
        return ri, ui, vi, wi, pi
    if un <= -c:
        return re, ue, ve, we, pe
    if un > 0.0:
        rs, us, vs, ws, ps, cs, uns = ri, ui, vi, wi, pi, ci, uni
    else:
        rs, us, vs, ws, ps, cs, uns = re, ue, ve, we, pe, ce, une
    ratio = (c * c) / (cs * cs)
    ex = 1.0 / (gamma - 1.0)
    rho = rs * ratio ** ex
    p = ps * ratio ** (gamma * ex)
    du = un - uns
    return rho, us + du * nx, vs + du * ny, ws + du * nz, p


@njit(inline="always")
def _node_prim(q, i, j, k, gamma):
    rho = q[0, i, j, k]
    ir = 1.0 / rho
    u = q[1, i, j, k] * ir
    v = q[2, i, j, k] * ir
    w = q[3, i, j, k] * ir
    p = (gamma - 1.0) * (q[4, i, j, k] - 0.5 * rho * (u * u + v * v + w * w))
    return rho, u, v, w, p


@njit(inline="always")
def _write_cons(q, i, j, k, gamma, rho, u, v, w, p):
    q[0, i, j, k] = rho
    q[1, i, j, k] = rho * u
    q[2, i, j, k] = rho * v
    q[3, i, j, k] = rho * w
    q[4, i, j, k] = p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v + w * w)


@njit(cache=True, nogil=True)
def _entrance_kernel(q, cof, coords, iw, lip, jet, amb, gamma, klo, khi):
    nj = q.shape[2]
    for j in range(nj):
        for k in range(klo, khi):
            cx = cof[0, 0, iw, j, k]
            cy = cof[0, 1, iw, j, k]
            cz = cof[0, 2, iw, j, k]
            nn = math.sqrt(cx * cx + cy * cy + cz * cz)
            if nn > _TINY_NORMAL:
                nx = -cx / nn
                ny = -cy / nn
                nz = -cz / nn
            else:
                nx = -1.0
                ny = 0.0
                nz = 0.0
            y = coords[1, iw, j, k]
            z = coords[2, iw, j, k]
            r = math.sqrt(y * y + z * z)
            ri, ui, vi, wi, pi = _node_prim(q, iw + 1, j, k, gamma)
            if r <= lip:
                rho, u, v, w, p = _char_state(gamma, ri, ui, vi, wi, pi,
                                              jet[0], jet[1], jet[2], jet[3], jet[4],
                                              nx, ny, nz)
            else:
                rho, u, v, w, p = _char_state(gamma, ri, ui, vi, wi, pi,
                                              amb[0], amb[1], amb[2], amb[3], amb[4],
                                              nx, ny, nz)
            _write_cons(q, iw, j, k, gamma, rho, u, v, w, p)


@njit(cache=True, nogil=True)
def _exit_kernel(q, cof, ie, gamma, p_exit, klo, khi):
    nj = q.shape[2]
    count = 0
    for j in range(nj):
        for k in range(klo, khi):
            cx = cof[0, 0, ie, j, k]
            cy = cof[0, 1, ie, j, k]
            cz = cof[0, 2, ie, j, k]
            nn = math.sqrt(cx * cx + cy * cy + cz * cz)
            if nn > _TINY_NORMAL:
                nx = cx / nn
                ny = cy / nn
                nz = cz / nn
            else:
                nx = 1.0
                ny = 0.0
                nz = 0.0
            ri, ui, vi, wi, pi = _node_prim(q, ie - 1, j, k, gamma)
            ci = math.sqrt(gamma * pi / ri)
            un = ui * nx + vi * ny + wi * nz
            if un >= ci:
                for v in range(5):
                    q[v, ie, j, k] = q[v, ie - 1, j, k]
                count += 1
            else:
                eint = pi / ((gamma - 1.0) * ri)
                rho = p_exit / ((gamma - 1.0) * eint)
                _write_cons(q, ie, j, k, gamma, rho, ui, vi, wi, p_exit)
    return count


@njit(cache=True, nogil=True)
def _farfield_kernel(q, cof, amb, gamma, ilo, ihi, klo, khi):
    nj = q.shape[2]
    jb = nj - 1
    for i in range(ilo, ihi):
        for k in range(klo, khi):
            cx = cof[1, 0, i, jb, k]
            cy = cof[1, 1, i, jb, k]
            cz = cof[1, 2, i, jb, k]
            nn = math.sqrt(cx * cx + cy * cy + cz * cz)
            if nn > _TINY_NORMAL:
                nx = cx / nn
                ny = cy / nn
                nz = cz / nn
            else:
                nx = 1.0
                ny = 0.0
                nz = 0.0
            ri, ui, vi, wi, pi = _node_prim(q, i, jb - 1, k, gamma)
            rho, u, v, w, p = _char_state(gamma, ri, ui, vi, wi, pi,
                                          amb[0], amb[1], amb[2], amb[3], amb[4],
                                          nx, ny, nz)
            _write_cons(q, i, jb, k, gamma, rho, u, v, w, p)


@njit(cache=True, nogil=True)
def _centerline_partial_kernel(q, klo, khi, out):
    ni = q.shape[1]
    for v in range(5):
        for i in range(ni):
            s = 0.0
            for k in range(klo, khi):
                s += q[v, i, 1, k]
            out[v, i] = s


@njit(cache=True, nogil=True)
def _centerline_apply_kernel(q, mean, ilo, ihi, klo, khi):
    for v in range(5):
        for i in range(ilo, ihi):
            m = mean[v, i]
            for k in range(klo, khi):
                q[v, i, 0, k] = m


def characteristic_state(cfg: FlowConfig, interior, exterior, normal):
    """Single-point form of the far-field treatment, for direct testing.

    ``interior`` and ``exterior`` are [rho, u, v, w, p]; ``normal`` is the
    outward unit normal.  Returns the solved [rho, u, v, w, p].
    """
    ri, ui, vi, wi, pi = (float(x) for x in interior[:5])
    re, ue, ve, we, pe = (float(x) for x in exterior[:5])
    nx, ny, nz = (float(x) for x in normal)
    return np.array(_char_state(cfg.gamma, ri, ui, vi, wi, pi,
                                re, ue, ve, we, pe, nx, ny, nz))


@dataclass
class BoundarySet:
    """Boundary data and application for one worker's block."""

    cfg: FlowConfig
    mesh: CurvilinearMesh
    lip_radius: float
    distinct_khi: int   # extended-index end of locally owned distinct stations
    jet_w: np.ndarray = field(repr=False, default=None)
    amb_w: np.ndarray = field(repr=False, default=None)
    supersonic_exit_nodes: int = 0
    _warned: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.jet_w is None:
            self.jet_w = np.ascontiguousarray(self.cfg.jet_primitive()[:5])
        if self.amb_w is None:
            self.amb_w = np.ascontiguousarray(self.cfg.ambient_primitive()[:5])

    @classmethod
    def for_block(cls, cfg: FlowConfig, mesh: CurvilinearMesh, lip_radius: float,
                  az_lo: int, az_hi: int, n_az_raw: int) -> "BoundarySet":
        distinct = (az_hi - az_lo) - (1 if az_hi == n_az_raw else 0)
        return cls(cfg=cfg, mesh=mesh, lip_radius=lip_radius,
                   distinct_khi=GHOST + distinct)

    def apply_local(self, q: np.ndarray) -> None:
        """Entrance, exit and far-field planes, in that order."""
        ni, nj, nk = self.mesh.shape
        klo, khi = GHOST, nk - GHOST
        if self.mesh.west_physical:
            _entrance_kernel(q, self.mesh.cof, self.mesh.coords, GHOST,
                             self.lip_radius, self.jet_w, self.amb_w,
                             self.cfg.gamma, klo, khi)
        if self.mesh.east_physical:
            n = _exit_kernel(q, self.mesh.cof, ni - GHOST - 1, self.cfg.gamma,
                             self.cfg.p_exit, klo, khi)
            if n and not self._warned:
                log.warning("exit plane supersonic on %d node(s); "
                            "fully extrapolating there", n)
                self._warned = True
            self.supersonic_exit_nodes += n
        _farfield_kernel(q, self.mesh.cof, self.amb_w, self.cfg.gamma,
                         GHOST, ni - GHOST, klo, khi)

    def centerline_partial(self, q: np.ndarray) -> tuple[np.ndarray, int]:
        """This block's fixed-order partial sum of the first off-axis ring."""
        out = np.zeros((5, self.mesh.shape[0]))
        _centerline_partial_kernel(q, GHOST, self.distinct_khi, out)
        return out, self.distinct_khi - GHOST

    def apply_centerline(self, q: np.ndarray, mean: np.ndarray) -> None:
        ni, nj, nk = self.mesh.shape
        _centerline_apply_kernel(q, mean, GHOST, ni - GHOST, GHOST, nk - GHOST)

    def apply(self, q: np.ndarray, ring_reduce=None) -> None:
        """Full ordered application.

        ``ring_reduce(partial, count)`` combines the centerline partial sums
        across the azimuthal ring; by default the block is assumed to own
        the whole ring.
        """
        self.apply_local(q)
        partial, count = self.centerline_partial(q)
        if ring_reduce is not None:
            partial, count = ring_reduce(partial, count)
        self.apply_centerline(q, partial / count)
