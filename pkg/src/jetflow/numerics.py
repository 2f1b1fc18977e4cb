"""Semi-discrete right-hand side: fluxes, scalar dissipation, divergence.

Blocks are ghost-extended in the axial and azimuthal directions by
``GHOST = 2`` layers per side; the radial direction carries no ghosts.  The
owned region of an extended array of shape (ni, nj, nk) is
``[2, ni-2) x [0, nj) x [2, nk-2)``.

All differences are second order with unit curvilinear spacing: central
inside, one-sided at physical boundary planes.  The same stencil choice per
node is used for metric evaluation (see meshgen), which is what makes a
uniform stream an exact discrete steady state.

The scalar artificial dissipation blends a pressure-sensed second
difference with a background fourth difference at half-point faces,
direction by direction, each scaled by that direction's spectral radius
``|u . cof| + c * |cof|``.  The fourth difference is dropped at faces whose
stencil would leave the valid data range and at radial faces whose stencil
touches the axis row.  The dissipation increment is zero at physical
boundary nodes; those nodes are rewritten by the boundary treatment.

Sign conventions: ``rhs = (D(inviscid) - D(viscous) - dissipation) / volume``
and the time update is ``q <- q0 - alpha * dt * rhs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import FlowConfig
from .meshgen import GHOST, CurvilinearMesh

__all__ = ["Scratch", "assemble_rhs", "artificial_dissipation",
           "dissipation_face_flux", "inviscid_flux", "viscous_flux",
           "sgs_stress", "update_stage", "owned_region"]

NVAR = 5


def owned_region(shape) -> tuple[slice, slice, slice]:
    ni, nj, nk = shape
    return slice(GHOST, ni - GHOST), slice(0, nj), slice(GHOST, nk - GHOST)


# -- kernels ---------------------------------------------------------------

@njit(cache=True, nogil=True)
def _prim_lam_kernel(q, cof, gamma, rgas, mu_ref, t_jet, t_ref, s1, prim, lam):
    ni, nj, nk = q.shape[1], q.shape[2], q.shape[3]
    g1 = gamma - 1.0
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                rho = q[0, i, j, k]
                ir = 1.0 / rho
                u = q[1, i, j, k] * ir
                v = q[2, i, j, k] * ir
                w = q[3, i, j, k] * ir
                p = g1 * (q[4, i, j, k] - 0.5 * rho * (u * u + v * v + w * w))
                t = p * ir / rgas
                c = math.sqrt(abs(gamma * p * ir))
                ratio = t / t_jet
                mu = (mu_ref * ratio * math.sqrt(abs(ratio))
                      * (t_ref + s1) / (t_ref * ratio + s1))
                prim[0, i, j, k] = u
                prim[1, i, j, k] = v
                prim[2, i, j, k] = w
                prim[3, i, j, k] = p
                prim[4, i, j, k] = t
                prim[5, i, j, k] = c
                prim[6, i, j, k] = mu
                for m in range(3):
                    cx = cof[m, 0, i, j, k]
                    cy = cof[m, 1, i, j, k]
                    cz = cof[m, 2, i, j, k]
                    lam[m, i, j, k] = (abs(u * cx + v * cy + w * cz)
                                       + c * math.sqrt(cx * cx + cy * cy + cz * cz))


@njit(cache=True, nogil=True)
def _sensor_kernel(p, ilo, ihi, iw, ie, nu):
    nj, nk = p.shape[1], p.shape[2]
    for i in range(ilo, ihi):
        for j in range(nj):
            for k in range(1, nk - 1):
                if i == iw:
                    num = p[i + 2, j, k] - 2.0 * p[i + 1, j, k] + p[i, j, k]
                    den = p[i + 2, j, k] + 2.0 * p[i + 1, j, k] + p[i, j, k]
                elif i == ie:
                    num = p[i - 2, j, k] - 2.0 * p[i - 1, j, k] + p[i, j, k]
                    den = p[i - 2, j, k] + 2.0 * p[i - 1, j, k] + p[i, j, k]
                else:
                    num = p[i + 1, j, k] - 2.0 * p[i, j, k] + p[i - 1, j, k]
                    den = p[i + 1, j, k] + 2.0 * p[i, j, k] + p[i - 1, j, k]
                nu[0, i, j, k] = abs(num) / abs(den)
                if j == 0:
                    num = p[i, j + 2, k] - 2.0 * p[i, j + 1, k] + p[i, j, k]
                    den = p[i, j + 2, k] + 2.0 * p[i, j + 1, k] + p[i, j, k]
                elif j == nj - 1:
                    num = p[i, j - 2, k] - 2.0 * p[i, j - 1, k] + p[i, j, k]
                    den = p[i, j - 2, k] + 2.0 * p[i, j - 1, k] + p[i, j, k]
                else:
                    num = p[i, j + 1, k] - 2.0 * p[i, j, k] + p[i, j - 1, k]
                    den = p[i, j + 1, k] + 2.0 * p[i, j, k] + p[i, j - 1, k]
                nu[1, i, j, k] = abs(num) / abs(den)
                num = p[i, j, k + 1] - 2.0 * p[i, j, k] + p[i, j, k - 1]
                den = p[i, j, k + 1] + 2.0 * p[i, j, k] + p[i, j, k - 1]
                nu[2, i, j, k] = abs(num) / abs(den)


@njit(cache=True, nogil=True)
def _inviscid_kernel(q, prim, cof, ilo, ihi, ehat):
    nj, nk = q.shape[2], q.shape[3]
    for i in range(ilo, ihi):
        for j in range(nj):
            for k in range(1, nk - 1):
                u = prim[0, i, j, k]
                v = prim[1, i, j, k]
                w = prim[2, i, j, k]
                p = prim[3, i, j, k]
                ep = q[4, i, j, k] + p
                for m in range(3):
                    cx = cof[m, 0, i, j, k]
                    cy = cof[m, 1, i, j, k]
                    cz = cof[m, 2, i, j, k]
                    un = u * cx + v * cy + w * cz
                    ehat[m, 0, i, j, k] = q[0, i, j, k] * un
                    ehat[m, 1, i, j, k] = q[1, i, j, k] * un + p * cx
                    ehat[m, 2, i, j, k] = q[2, i, j, k] * un + p * cy
                    ehat[m, 3, i, j, k] = q[3, i, j, k] * un + p * cz
                    ehat[m, 4, i, j, k] = ep * un


@njit(inline="always")
def _d_i(a, row, i, j, k, iw, ie):
    if i == iw:
        return (-1.5 * a[row, i, j, k] + 2.0 * a[row, i + 1, j, k]
                - 0.5 * a[row, i + 2, j, k])
    if i == ie:
        return (1.5 * a[row, i, j, k] - 2.0 * a[row, i - 1, j, k]
                + 0.5 * a[row, i - 2, j, k])
    return 0.5 * (a[row, i + 1, j, k] - a[row, i - 1, j, k])


@njit(inline="always")
def _d_j(a, row, i, j, k, nj):
    if j == 0:
        return (-1.5 * a[row, i, j, k] + 2.0 * a[row, i, j + 1, k]
                - 0.5 * a[row, i, j + 2, k])
    if j == nj - 1:
        return (1.5 * a[row, i, j, k] - 2.0 * a[row, i, j - 1, k]
                + 0.5 * a[row, i, j - 2, k])
    return 0.5 * (a[row, i, j + 1, k] - a[row, i, j - 1, k])


@njit(inline="always")
def _d_k(a, row, i, j, k):
    return 0.5 * (a[row, i, j, k + 1] - a[row, i, j, k - 1])


@njit(cache=True, nogil=True)
def _viscous_kernel(prim, cof, vol, ilo, ihi, iw, ie, cp_over_pr, fhat):
    nj, nk = vol.shape[1], vol.shape[2]
    for i in range(ilo, ihi):
        for j in range(nj):
            for k in range(1, nk - 1):
                iv = 1.0 / vol[i, j, k]
                c00 = cof[0, 0, i, j, k]
                c01 = cof[0, 1, i, j, k]
                c02 = cof[0, 2, i, j, k]
                c10 = cof[1, 0, i, j, k]
                c11 = cof[1, 1, i, j, k]
                c12 = cof[1, 2, i, j, k]
                c20 = cof[2, 0, i, j, k]
                c21 = cof[2, 1, i, j, k]
                c22 = cof[2, 2, i, j, k]
                du0 = _d_i(prim, 0, i, j, k, iw, ie)
                du1 = _d_j(prim, 0, i, j, k, nj)
                du2 = _d_k(prim, 0, i, j, k)
                dv0 = _d_i(prim, 1, i, j, k, iw, ie)
                dv1 = _d_j(prim, 1, i, j, k, nj)
                dv2 = _d_k(prim, 1, i, j, k)
                dw0 = _d_i(prim, 2, i, j, k, iw, ie)
                dw1 = _d_j(prim, 2, i, j, k, nj)
                dw2 = _d_k(prim, 2, i, j, k)
                dt0 = _d_i(prim, 4, i, j, k, iw, ie)
                dt1 = _d_j(prim, 4, i, j, k, nj)
                dt2 = _d_k(prim, 4, i, j, k)
                gux = (c00 * du0 + c10 * du1 + c20 * du2) * iv
                guy = (c01 * du0 + c11 * du1 + c21 * du2) * iv
                guz = (c02 * du0 + c12 * du1 + c22 * du2) * iv
                gvx = (c00 * dv0 + c10 * dv1 + c20 * dv2) * iv
                gvy = (c01 * dv0 + c11 * dv1 + c21 * dv2) * iv
                gvz = (c02 * dv0 + c12 * dv1 + c22 * dv2) * iv
                gwx = (c00 * dw0 + c10 * dw1 + c20 * dw2) * iv
                gwy = (c01 * dw0 + c11 * dw1 + c21 * dw2) * iv
                gwz = (c02 * dw0 + c12 * dw1 + c22 * dw2) * iv
                gtx = (c00 * dt0 + c10 * dt1 + c20 * dt2) * iv
                gty = (c01 * dt0 + c11 * dt1 + c21 * dt2) * iv
                gtz = (c02 * dt0 + c12 * dt1 + c22 * dt2) * iv
                mu = prim[6, i, j, k]
                kappa = mu * cp_over_pr
                lam2 = -2.0 * mu / 3.0 * (gux + gvy + gwz)
                txx = 2.0 * mu * gux + lam2
                tyy = 2.0 * mu * gvy + lam2
                tzz = 2.0 * mu * gwz + lam2
                txy = mu * (guy + gvx)
                txz = mu * (guz + gwx)
                tyz = mu * (gvz + gwy)
                u = prim[0, i, j, k]
                v = prim[1, i, j, k]
                w = prim[2, i, j, k]
                fex = txx * u + txy * v + txz * w + kappa * gtx
                fey = txy * u + tyy * v + tyz * w + kappa * gty
                fez = txz * u + tyz * v + tzz * w + kappa * gtz
                fhat[0, 0, i, j, k] = 0.0
                fhat[0, 1, i, j, k] = txx * c00 + txy * c01 + txz * c02
                fhat[0, 2, i, j, k] = txy * c00 + tyy * c01 + tyz * c02
                fhat[0, 3, i, j, k] = txz * c00 + tyz * c01 + tzz * c02
                fhat[0, 4, i, j, k] = fex * c00 + fey * c01 + fez * c02
                fhat[1, 0, i, j, k] = 0.0
                fhat[1, 1, i, j, k] = txx * c10 + txy * c11 + txz * c12
                fhat[1, 2, i, j, k] = txy * c10 + tyy * c11 + tyz * c12
                fhat[1, 3, i, j, k] = txz * c10 + tyz * c11 + tzz * c12
                fhat[1, 4, i, j, k] = fex * c10 + fey * c11 + fez * c12
                fhat[2, 0, i, j, k] = 0.0
                fhat[2, 1, i, j, k] = txx * c20 + txy * c21 + txz * c22
                fhat[2, 2, i, j, k] = txy * c20 + tyy * c21 + tyz * c22
                fhat[2, 3, i, j, k] = txz * c20 + tyz * c21 + tzz * c22
                fhat[2, 4, i, j, k] = fex * c20 + fey * c21 + fez * c22


@njit(cache=True, nogil=True)
def _faces_kernel(q, nu, lam, k2, k4, tlo_i, thi_i, dlo_i, dhi_i, axis_low, dface):
    ni, nj, nk = q.shape[1], q.shape[2], q.shape[3]
    # axial faces (t | t+1), stored at index t
    for t in range(tlo_i, thi_i + 1):
        four_ok_i = t - 1 >= dlo_i and t + 2 <= dhi_i
        for j in range(nj):
            for k in range(2, nk - 2):
                eps2 = k2 * max(nu[0, t, j, k], nu[0, t + 1, j, k])
                eps4 = k4 - eps2
                if eps4 < 0.0 or not four_ok_i:
                    eps4 = 0.0
                lf = 0.5 * (lam[0, t, j, k] + lam[0, t + 1, j, k])
                for v in range(NVAR):
                    d1 = q[v, t + 1, j, k] - q[v, t, j, k]
                    if eps4 > 0.0:
                        d3 = (q[v, t + 2, j, k] - 3.0 * q[v, t + 1, j, k]
                              + 3.0 * q[v, t, j, k] - q[v, t - 1, j, k])
                    else:
                        d3 = 0.0
                    dface[0, v, t, j, k] = lf * (eps2 * d1 - eps4 * d3)
    # radial faces
    jlim = 2 if axis_low else 1
    for i in range(2, ni - 2):
        for t in range(0, nj - 1):
            four_ok_j = jlim <= t <= nj - 3
            for k in range(2, nk - 2):
                eps2 = k2 * max(nu[1, i, t, k], nu[1, i, t + 1, k])
                eps4 = k4 - eps2
                if eps4 < 0.0 or not four_ok_j:
                    eps4 = 0.0
                lf = 0.5 * (lam[1, i, t, k] + lam[1, i, t + 1, k])
                for v in range(NVAR):
                    d1 = q[v, i, t + 1, k] - q[v, i, t, k]
                    if eps4 > 0.0:
                        d3 = (q[v, i, t + 2, k] - 3.0 * q[v, i, t + 1, k]
                              + 3.0 * q[v, i, t, k] - q[v, i, t - 1, k])
                    else:
                        d3 = 0.0
                    dface[1, v, i, t, k] = lf * (eps2 * d1 - eps4 * d3)
    # azimuthal faces; ghost layers keep the fourth difference available
    for i in range(2, ni - 2):
        for j in range(nj):
            for t in range(1, nk - 2):
                eps2 = k2 * max(nu[2, i, j, t], nu[2, i, j, t + 1])
                eps4 = k4 - eps2
                if eps4 < 0.0:
                    eps4 = 0.0
                lf = 0.5 * (lam[2, i, j, t] + lam[2, i, j, t + 1])
                for v in range(NVAR):
                    d1 = q[v, i, j, t + 1] - q[v, i, j, t]
                    d3 = (q[v, i, j, t + 2] - 3.0 * q[v, i, j, t + 1]
                          + 3.0 * q[v, i, j, t] - q[v, i, j, t - 1])
                    dface[2, v, i, j, t] = lf * (eps2 * d1 - eps4 * d3)


@njit(cache=True, nogil=True)
def _rhs_kernel(ehat, fhat, dface, vol, iw, ie, rhs):
    ni, nj, nk = vol.shape
    for v in range(NVAR):
        e0 = ehat[0, v]
        e1 = ehat[1, v]
        e2 = ehat[2, v]
        f0 = fhat[0, v]
        f1 = fhat[1, v]
        f2 = fhat[2, v]
        d0 = dface[0, v]
        d1 = dface[1, v]
        d2 = dface[2, v]
        out = rhs[v]
        for i in range(2, ni - 2):
            for j in range(nj):
                for k in range(2, nk - 2):
                    if i == iw:
                        div = (-1.5 * (e0[i, j, k] - f0[i, j, k])
                               + 2.0 * (e0[i + 1, j, k] - f0[i + 1, j, k])
                               - 0.5 * (e0[i + 2, j, k] - f0[i + 2, j, k]))
                    elif i == ie:
                        div = (1.5 * (e0[i, j, k] - f0[i, j, k])
                               - 2.0 * (e0[i - 1, j, k] - f0[i - 1, j, k])
                               + 0.5 * (e0[i - 2, j, k] - f0[i - 2, j, k]))
                    else:
                        div = 0.5 * ((e0[i + 1, j, k] - f0[i + 1, j, k])
                                     - (e0[i - 1, j, k] - f0[i - 1, j, k]))
                    if j == 0:
                        div += (-1.5 * (e1[i, j, k] - f1[i, j, k])
                                + 2.0 * (e1[i, j + 1, k] - f1[i, j + 1, k])
                                - 0.5 * (e1[i, j + 2, k] - f1[i, j + 2, k]))
                    elif j == nj - 1:
                        div += (1.5 * (e1[i, j, k] - f1[i, j, k])
                                - 2.0 * (e1[i, j - 1, k] - f1[i, j - 1, k])
                                + 0.5 * (e1[i, j - 2, k] - f1[i, j - 2, k]))
                    else:
                        div += 0.5 * ((e1[i, j + 1, k] - f1[i, j + 1, k])
                                      - (e1[i, j - 1, k] - f1[i, j - 1, k]))
                    div += 0.5 * ((e2[i, j, k + 1] - f2[i, j, k + 1])
                                  - (e2[i, j, k - 1] - f2[i, j, k - 1]))
                    if i != iw and i != ie and 0 < j < nj - 1:
                        dinc = (d0[i, j, k] - d0[i - 1, j, k]
                                + d1[i, j, k] - d1[i, j - 1, k]
                                + d2[i, j, k] - d2[i, j, k - 1])
                    else:
                        dinc = 0.0
                    out[i, j, k] = (div - dinc) / vol[i, j, k]


@njit(cache=True, nogil=True)
def _update_scan_kernel(q, q0, rhs, adt, gamma, iw, ie):
    ni, nj, nk = q.shape[1], q.shape[2], q.shape[3]
    g1 = gamma - 1.0
    bi = -1
    bj = -1
    bk = -1
    for i in range(2, ni - 2):
        for j in range(nj):
            for k in range(2, nk - 2):
                rho = q0[0, i, j, k] - adt * rhs[0, i, j, k]
                mx = q0[1, i, j, k] - adt * rhs[1, i, j, k]
                my = q0[2, i, j, k] - adt * rhs[2, i, j, k]
                mz = q0[3, i, j, k] - adt * rhs[3, i, j, k]
                en = q0[4, i, j, k] - adt * rhs[4, i, j, k]
                q[0, i, j, k] = rho
                q[1, i, j, k] = mx
                q[2, i, j, k] = my
                q[3, i, j, k] = mz
                q[4, i, j, k] = en
                if bi < 0 and i != iw and i != ie and 0 < j < nj - 1:
                    ok = ((rho - rho == 0.0) and (en - en == 0.0)
                          and (mx - mx == 0.0) and (my - my == 0.0)
                          and (mz - mz == 0.0))
                    if ok and rho > 0.0 and en > 0.0:
                        p = g1 * (en - 0.5 * (mx * mx + my * my + mz * mz) / rho)
                        if not (p > 0.0):
                            ok = False
                    else:
                        ok = False
                    if not ok:
                        bi = i
                        bj = j
                        bk = k
    return bi, bj, bk


# -- wrappers ---------------------------------------------------------------

@dataclass
class Scratch:
    """Reused per-stage work arrays for one block."""

    prim: np.ndarray    # u, v, w, p, T, c, mu
    lam: np.ndarray     # per-direction spectral radii
    nu: np.ndarray      # per-direction pressure sensor
    ehat: np.ndarray
    fhat: np.ndarray
    dface: np.ndarray
    rhs: np.ndarray

    @classmethod
    def allocate(cls, shape) -> "Scratch":
        ni, nj, nk = shape
        return cls(
            prim=np.zeros((7, ni, nj, nk)),
            lam=np.zeros((3, ni, nj, nk)),
            nu=np.zeros((3, ni, nj, nk)),
            ehat=np.zeros((3, NVAR, ni, nj, nk)),
            fhat=np.zeros((3, NVAR, ni, nj, nk)),
            dface=np.zeros((3, NVAR, ni, nj, nk)),
            rhs=np.zeros((NVAR, ni, nj, nk)),
        )


def _bounds(mesh: CurvilinearMesh):
    ni = mesh.shape[0]
    ilo = GHOST if mesh.west_physical else GHOST - 1
    ihi = ni - GHOST if mesh.east_physical else ni - GHOST + 1
    iw = GHOST if mesh.west_physical else -1
    ie = ni - GHOST - 1 if mesh.east_physical else -1
    return ilo, ihi, iw, ie


def assemble_rhs(q: np.ndarray, mesh: CurvilinearMesh, cfg: FlowConfig,
                 scratch: Scratch | None = None,
                 freeze_coefficients: bool = False) -> np.ndarray:
    """Full right-hand side on the owned region; returns ``scratch.rhs``.

    ``scratch`` must belong to this block (same shape and boundary flags).
    With ``freeze_coefficients`` the pressure-sensor values kept from the
    previous call are reused; spectral radii are always refreshed.
    """
    if scratch is None:
        scratch = Scratch.allocate(mesh.shape)
    ilo, ihi, iw, ie = _bounds(mesh)
    ni = mesh.shape[0]
    _prim_lam_kernel(q, mesh.cof, cfg.gamma, cfg.gas_constant, cfg.mu_ref,
                     cfg.t_jet, cfg.t_ref, cfg.sutherland_s1,
                     scratch.prim, scratch.lam)
    if not freeze_coefficients:
        _sensor_kernel(scratch.prim[3], ilo, ihi, iw, ie, scratch.nu)
    _inviscid_kernel(q, scratch.prim, mesh.cof, ilo, ihi, scratch.ehat)
    _viscous_kernel(scratch.prim, mesh.cof, mesh.volume, ilo, ihi, iw, ie,
                    cfg.cp / cfg.prandtl, scratch.fhat)
    tlo_i = GHOST if mesh.west_physical else GHOST - 1
    thi_i = ni - GHOST - 2 if mesh.east_physical else ni - GHOST - 1
    dlo_i = GHOST if mesh.west_physical else 0
    dhi_i = ni - GHOST - 1 if mesh.east_physical else ni - 1
    _faces_kernel(q, scratch.nu, scratch.lam, cfg.k2, cfg.k4,
                  tlo_i, thi_i, dlo_i, dhi_i, mesh.axis_low, scratch.dface)
    _rhs_kernel(scratch.ehat, scratch.fhat, scratch.dface, mesh.volume,
                iw, ie, scratch.rhs)
    return scratch.rhs


def dissipation_face_flux(q: np.ndarray, mesh: CurvilinearMesh, cfg: FlowConfig,
                          scratch: Scratch | None = None) -> np.ndarray:
    """Half-point dissipation fluxes ``dface[direction, var, ...]``.

    ``dface[0, v, t, j, k]`` sits between axial nodes t and t+1, and so on
    per direction.  Faces outside the active range stay zero.
    """
    if scratch is None:
        scratch = Scratch.allocate(mesh.shape)
    assemble_rhs(q, mesh, cfg, scratch)
    return scratch.dface


def artificial_dissipation(q: np.ndarray, mesh: CurvilinearMesh, cfg: FlowConfig,
                           scratch: Scratch | None = None) -> np.ndarray:
    """Per-node dissipation increment, before division by the cell volume.

    This is exactly the term subtracted inside ``assemble_rhs``; it vanishes
    on physical boundary planes.
    """
    if scratch is None:
        scratch = Scratch.allocate(mesh.shape)
    dface = dissipation_face_flux(q, mesh, cfg, scratch)
    ni, nj, nk = mesh.shape
    _, _, iw, ie = _bounds(mesh)
    si, sj, sk = owned_region(mesh.shape)
    inc = np.zeros((NVAR, ni, nj, nk))
    inc[:, si, 1:nj - 1, sk] = (
        dface[0, :, si, 1:nj - 1, sk]
        - dface[0, :, si.start - 1:si.stop - 1, 1:nj - 1, sk]
        + dface[1, :, si, 1:nj - 1, sk]
        - dface[1, :, si, 0:nj - 2, sk]
        + dface[2, :, si, 1:nj - 1, sk]
        - dface[2, :, si, 1:nj - 1, sk.start - 1:sk.stop - 1])
    if iw >= 0:
        inc[:, iw] = 0.0
    if ie >= 0:
        inc[:, ie] = 0.0
    return inc


def update_stage(q: np.ndarray, q0: np.ndarray, rhs: np.ndarray,
                 alpha_dt: float, cfg: FlowConfig, mesh: CurvilinearMesh):
    """Low-storage stage update on the owned region with a validity scan.

    Returns extended-block indices of the first invalid interior node, or
    ``(-1, -1, -1)`` when the update is clean.  Physical boundary planes are
    rewritten by the boundary treatment and are not scanned.
    """
    _, _, iw, ie = _bounds(mesh)
    return _update_scan_kernel(q, q0, rhs, alpha_dt, cfg.gamma, iw, ie)


# -- plain reference forms, used directly in unit tests ---------------------

def inviscid_flux(w: np.ndarray, cfg: FlowConfig,
                  cof: np.ndarray | None = None) -> np.ndarray:
    """Inviscid flux per direction from primitive rows [rho, u, v, w, p, T].

    With ``cof`` omitted the three Cartesian flux vectors are returned;
    otherwise they are contracted against the cofactor rows,
    ``out[m] = sum_c cof[m, c] * flux_cartesian[c]``.
    """
    w = np.asarray(w, dtype=np.float64)
    rho, u, v, vz, p = w[0], w[1], w[2], w[3], w[4]
    e = p / (cfg.gamma - 1.0) + 0.5 * rho * (u * u + v * v + vz * vz)
    vel = (u, v, vz)
    out = np.empty((3, NVAR) + w.shape[1:], dtype=np.float64)
    for c in range(3):
        un = vel[c]
        out[c, 0] = rho * un
        out[c, 1] = rho * u * un
        out[c, 2] = rho * v * un
        out[c, 3] = rho * vz * un
        out[c, c + 1] = out[c, c + 1] + p
        out[c, 4] = (e + p) * un
    if cof is None:
        return out
    cof = np.asarray(cof, dtype=np.float64)
    return np.einsum("mc...,cn...->mn...", cof, out)


def viscous_flux(w: np.ndarray, grad_u: np.ndarray, grad_t: np.ndarray,
                 mu, mu_sgs, cfg: FlowConfig) -> np.ndarray:
    """Cartesian viscous flux per direction.

    ``grad_u[a, c]`` is du_a/dx_c and ``grad_t[c]`` is dT/dx_c.  The energy
    row carries ``tau . u`` plus conduction ``kappa dT/dx`` so that heat
    flows down the temperature gradient.
    """
    w = np.asarray(w, dtype=np.float64)
    grad_u = np.asarray(grad_u, dtype=np.float64)
    grad_t = np.asarray(grad_t, dtype=np.float64)
    mu_t = np.asarray(mu, dtype=np.float64) + np.asarray(mu_sgs, dtype=np.float64)
    kappa = (np.asarray(mu, dtype=np.float64) * cfg.cp / cfg.prandtl
             + np.asarray(mu_sgs, dtype=np.float64) * cfg.cp / cfg.prandtl_sgs)
    divu = grad_u[0, 0] + grad_u[1, 1] + grad_u[2, 2]
    tau = np.empty_like(grad_u)
    for a in range(3):
        for c in range(3):
            tau[a, c] = mu_t * (grad_u[a, c] + grad_u[c, a])
        tau[a, a] = tau[a, a] - 2.0 / 3.0 * mu_t * divu
    out = np.zeros((3, NVAR) + grad_t.shape[1:], dtype=np.float64)
    for c in range(3):
        out[c, 1] = tau[0, c]
        out[c, 2] = tau[1, c]
        out[c, 3] = tau[2, c]
        out[c, 4] = (tau[0, c] * w[1] + tau[1, c] * w[2] + tau[2, c] * w[3]
                     + kappa * grad_t[c])
    return out


def sgs_stress(strain: np.ndarray, mu_sgs, sigma_kk=0.0) -> np.ndarray:
    """Subgrid stress ``-2 mu_sgs (S - tr(S)/3 I) + sigma_kk I / 3``."""
    strain = np.asarray(strain, dtype=np.float64)
    tr = strain[0, 0] + strain[1, 1] + strain[2, 2]
    out = -2.0 * np.asarray(mu_sgs) * strain
    for a in range(3):
        out[a, a] = out[a, a] + (2.0 / 3.0 * np.asarray(mu_sgs) * tr
                                 + np.asarray(sigma_kk) / 3.0)
    return out
