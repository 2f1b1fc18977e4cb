"""Cylindrical grid generation and curvilinear metric evaluation.

The grid is a tensor product: axial stations clustered toward the entrance
by a one-sided tanh map, radial stations clustered about the jet lip line by
an interior sinh map (first station exactly on the axis), and uniform
azimuthal stations where the closing station repeats the first one bitwise
so the ring is geometrically superposed.

Metrics are evaluated with the same second-order differences the flux
scheme uses (central inside, one-sided at physical boundaries), in cofactor
form.  On tensor-product grids this makes the discrete free-stream identity
hold to rounding, which the solver relies on.  Curvilinear spacing is unit,
so metric values absorb all physical grid spacing.

The axis row is a coordinate singularity: its cell volume vanishes, so the
stored volume/jacobian there is copied from the first off-axis row.  Axis
values of the state are owned by the centerline boundary treatment and the
interior scheme never divides by the axis volume.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields

import numpy as np

from .core import ConfigError, coerce_section
from .partition import PartitionTopology

__all__ = ["MeshError", "GridSpec", "GlobalGrid", "CurvilinearMesh",
           "generate", "compute_metrics", "GHOST"]

GHOST = 2  # ghost layers per partitioned side


class MeshError(ValueError):
    """Raised for invalid grid specs or degenerate metrics."""


@dataclass(frozen=True)
class GridSpec:
    """Point counts and clustering for the cylindrical domain."""

    n_axial: int
    n_radial: int
    n_azimuthal: int = 361
    length: float = 30.0        # axial extent, diameters
    height: float = 10.0        # radial extent, diameters
    lip_radius: float = 0.5     # shear-layer clustering target
    stretch_axial: float = 2.0
    stretch_radial: float = 7.0

    _SCHEMA = {
        "n_axial": int, "n_radial": int, "n_azimuthal": int,
        "length": float, "height": float, "lip_radius": float,
        "stretch_axial": float, "stretch_radial": float,
    }

    def __post_init__(self):
        if self.n_axial < 3 or self.n_radial < 3:
            raise ConfigError("need at least 3 axial and 3 radial stations")
        if self.n_azimuthal < 4:
            raise ConfigError("need at least 4 azimuthal stations (3 distinct plus closure)")
        if self.length <= 0.0 or self.height <= 0.0:
            raise ConfigError("domain extents must be positive")
        if not 0.0 < self.lip_radius < self.height:
            raise ConfigError("lip_radius must sit inside the radial extent")
        if self.stretch_axial < 0.0 or self.stretch_radial < 0.0:
            raise ConfigError("stretch factors must be non-negative")

    @property
    def total_points(self) -> int:
        return self.n_axial * self.n_radial * self.n_azimuthal

    def canonical_text(self) -> str:
        items = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)
                 if not f.name.startswith("_")]
        return "\n".join(sorted(items)) + "\n"

    def digest(self) -> str:
        return hashlib.blake2b(self.canonical_text().encode(), digest_size=16).hexdigest()

    @classmethod
    def from_mapping(cls, sec, source: str = "<config>") -> "GridSpec":
        return cls(**coerce_section(sec, cls._SCHEMA, source))


def _tanh_entrance(n: int, length: float, beta: float) -> np.ndarray:
    """Stations on [0, length] clustered toward 0."""
    if beta == 0.0:
        return np.linspace(0.0, length, n)
    xi = np.linspace(0.0, 1.0, n)
    x = length * (1.0 + np.tanh(beta * (xi - 1.0)) / math.tanh(beta))
    x[0] = 0.0
    x[-1] = length
    return x


def _sinh_interior(n: int, height: float, r_c: float, beta: float) -> np.ndarray:
    """Stations on [0, height] clustered about interior radius ``r_c``."""
    if beta == 0.0:
        return np.linspace(0.0, height, n)
    frac = r_c / height
    a = (0.5 / beta) * math.log(
        (1.0 + (math.exp(beta) - 1.0) * frac) / (1.0 + (math.exp(-beta) - 1.0) * frac))
    xi = np.linspace(0.0, 1.0, n)
    r = r_c * (1.0 + np.sinh(beta * (xi - a)) / math.sinh(beta * a))
    if abs(r[-1] - height) > 1e-6 * height:
        raise MeshError(f"interior clustering failed to land on the outer radius: {r[-1]!r}")
    r[0] = 0.0
    r[-1] = height
    return r


@dataclass(frozen=True)
class GlobalGrid:
    """Tensor-product stations; 3-D blocks are materialized per partition."""

    spec: GridSpec
    x_axial: np.ndarray    # (n_axial,)
    r_radial: np.ndarray   # (n_radial,)
    theta: np.ndarray      # (n_azimuthal,), closing station at 2*pi
    cos_t: np.ndarray      # closing entries copied bitwise from station 0
    sin_t: np.ndarray

    def wrap_index(self, k: int) -> int:
        """Map an out-of-range azimuthal index onto the distinct ring."""
        n_az = self.spec.n_azimuthal
        return k if 0 <= k < n_az else k % (n_az - 1)

    def coords_at(self, gi, j, gk) -> tuple[float, float, float]:
        c = self.cos_t[gk]
        s = self.sin_t[gk]
        r = self.r_radial[j]
        return float(self.x_axial[gi]), float(r * c), float(r * s)

    def coords_full(self) -> np.ndarray:
        """Materialize the whole grid as (3, n_axial, n_radial, n_azimuthal)."""
        x = np.broadcast_to(
            self.x_axial[:, None, None],
            (self.spec.n_axial, self.spec.n_radial, self.spec.n_azimuthal))
        y = self.r_radial[None, :, None] * self.cos_t[None, None, :]
        z = self.r_radial[None, :, None] * self.sin_t[None, None, :]
        y = np.broadcast_to(y, x.shape)
        z = np.broadcast_to(z, x.shape)
        return np.stack([np.ascontiguousarray(x), y, z])

    def coords_block(self, topo: PartitionTopology, rank: int) -> np.ndarray:
        """Extended coordinates (owned plus two ghost layers) for one block.

        Axial ghost indices beyond a physical boundary are clamped edge
        copies; they are never read by the scheme.  Azimuthal ghosts wrap
        around the distinct ring so the superposed station stays exact.
        """
        blk = topo.block(rank)
        n_ax = self.spec.n_axial
        gi = np.clip(np.arange(blk.ax_lo - GHOST, blk.ax_hi + GHOST), 0, n_ax - 1)
        gk = np.array([self.wrap_index(k)
                       for k in range(blk.az_lo - GHOST, blk.az_hi + GHOST)])
        x = np.broadcast_to(self.x_axial[gi][:, None, None],
                            (gi.size, self.spec.n_radial, gk.size))
        y = self.r_radial[None, :, None] * self.cos_t[gk][None, None, :]
        z = self.r_radial[None, :, None] * self.sin_t[gk][None, None, :]
        y = np.broadcast_to(y, x.shape)
        z = np.broadcast_to(z, x.shape)
        return np.stack([np.ascontiguousarray(x),
                         np.ascontiguousarray(y),
                         np.ascontiguousarray(z)])


def generate(spec: GridSpec) -> GlobalGrid:
    """Build the station tables for ``spec``."""
    x = _tanh_entrance(spec.n_axial, spec.length, spec.stretch_axial)
    r = _sinh_interior(spec.n_radial, spec.height, spec.lip_radius, spec.stretch_radial)
    n_az = spec.n_azimuthal
    k = np.arange(n_az, dtype=np.float64)
    theta = 2.0 * math.pi * k / (n_az - 1)
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    cos_t[-1] = cos_t[0]
    sin_t[-1] = sin_t[0]
    if not (np.all(np.diff(x) > 0.0) and np.all(np.diff(r) > 0.0)):
        raise MeshError("station tables must increase strictly")
    return GlobalGrid(spec=spec, x_axial=x, r_radial=r, theta=theta,
                      cos_t=cos_t, sin_t=sin_t)


# -- metrics ----------------------------------------------------------------

def _diff(f: np.ndarray, axis: int, one_lo_plane: int = -1, one_hi_plane: int = -1) -> np.ndarray:
    """Second-order derivative along ``axis`` with unit spacing.

    Central inside, one-sided at the array edges, and one-sided again at the
    interior planes named by ``one_lo_plane``/``one_hi_plane`` (physical
    boundaries that sit inboard of clamped ghost layers).
    """
    g = np.moveaxis(f, axis, 0)
    d = np.empty_like(g)
    d[1:-1] = 0.5 * (g[2:] - g[:-2])
    d[0] = -1.5 * g[0] + 2.0 * g[1] - 0.5 * g[2]
    d[-1] = 1.5 * g[-1] - 2.0 * g[-2] + 0.5 * g[-3]
    if one_lo_plane > 0:
        i = one_lo_plane
        d[i] = -1.5 * g[i] + 2.0 * g[i + 1] - 0.5 * g[i + 2]
    if 0 <= one_hi_plane < g.shape[0] - 1:
        i = one_hi_plane
        d[i] = 1.5 * g[i] - 2.0 * g[i - 1] + 0.5 * g[i - 2]
    return np.moveaxis(d, 0, axis)


@dataclass
class CurvilinearMesh:
    """Geometry of one (possibly ghost-extended) block."""

    coords: np.ndarray    # (3, ni, nj, nk)
    cof: np.ndarray       # (3, 3, ni, nj, nk); cof[m, c] = volume * d(xi_m)/d(x_c)
    volume: np.ndarray    # (ni, nj, nk), axis row regularized
    west_physical: bool
    east_physical: bool
    axis_low: bool

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.coords.shape[1:]

    @property
    def jacobian(self) -> np.ndarray:
        """det(d xi / d x); zero where the volume degenerates (unused nodes)."""
        with np.errstate(divide="ignore"):
            j = np.where(self.volume > 0.0, 1.0 / self.volume, 0.0)
        return j

    @property
    def metrics(self) -> np.ndarray:
        """d(xi_m)/d(x_c) per node, shape (3, 3, ni, nj, nk)."""
        return self.cof * self.jacobian

    def radius(self) -> np.ndarray:
        return np.hypot(self.coords[1], self.coords[2])


def compute_metrics(coords: np.ndarray, *, west_physical: bool = True,
                    east_physical: bool = True, axis_low: bool = False,
                    ghost_axial: int = 0, check_owned=None,
                    global_origin=(0, 0, 0)) -> CurvilinearMesh:
    """Cofactor metrics and cell volume from block coordinates.

    ``ghost_axial`` names how many axial ghost layers the array carries per
    side; at a physical axial boundary those layers hold clamped copies, so
    the one-sided stencil is applied at the true boundary plane inboard of
    them.  ``check_owned`` is an (islice, jslice, kslice) triple naming the
    owned region; volume positivity is enforced there and reported with
    global indices offset by ``global_origin``.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 4 or coords.shape[0] != 3:
        raise MeshError(f"coords must be (3, ni, nj, nk), got {coords.shape}")
    ni, nj, nk = coords.shape[1:]
    if min(ni, nj, nk) < 3:
        raise MeshError(f"blocks need at least 3 points per direction, got {coords.shape[1:]}")

    one_lo = ghost_axial if west_physical and ghost_axial > 0 else -1
    one_hi = ni - 1 - ghost_axial if east_physical and ghost_axial > 0 else -1
    t1 = np.stack([_diff(coords[c], 0, one_lo, one_hi) for c in range(3)])
    t2 = np.stack([_diff(coords[c], 1) for c in range(3)])
    t3 = np.stack([_diff(coords[c], 2) for c in range(3)])

    cof = np.empty((3, 3) + coords.shape[1:], dtype=np.float64)
    cof[0] = np.cross(t2, t3, axisa=0, axisb=0, axisc=0)
    cof[1] = np.cross(t3, t1, axisa=0, axisb=0, axisc=0)
    cof[2] = np.cross(t1, t2, axisa=0, axisb=0, axisc=0)
    volume = np.einsum("cijk,cijk->ijk", t1, cof[0])

    if axis_low:
        volume[:, 0, :] = volume[:, 1, :]

    if check_owned is not None:
        si, sj, sk = check_owned
        owned = volume[si, sj, sk]
        if not np.all(owned > 0.0):
            bad = np.unravel_index(int(np.argmin(owned)), owned.shape)
            gi = (bad[0] + (si.start or 0)) + global_origin[0]
            gj = (bad[1] + (sj.start or 0)) + global_origin[1]
            gk = (bad[2] + (sk.start or 0)) + global_origin[2]
            raise MeshError(
                f"non-positive cell volume {owned[bad]!r} at global node ({gi}, {gj}, {gk})")

    return CurvilinearMesh(coords=coords, cof=cof, volume=volume,
                           west_physical=west_physical, east_physical=east_physical,
                           axis_low=axis_low)
