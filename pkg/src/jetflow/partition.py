"""Balanced domain partitioning and the worker topology it induces.

The grid is split in the axial and azimuthal directions only; the radial
direction always stays whole on every worker.  Point counts are balanced so
that no two blocks differ by more than one point per direction: each of the
``parts`` blocks gets ``total // parts`` points and the first
``total % parts`` blocks get one extra.

Azimuthal blocks form a ring.  The global azimuthal index space includes the
superposed closing station (the first and last stations are the same
physical location), so ghost lookups below index 0 or above the last index
wrap modulo ``n_azimuthal - 1`` distinct stations.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import ConfigError, coerce_section

__all__ = ["PartitionError", "PartitionSpec", "Block", "PartitionTopology",
           "balance", "build_topology", "MIN_BLOCK"]

MIN_BLOCK = 3  # two-layer ghosts must come from a single neighbor


class PartitionError(ValueError):
    """Raised for infeasible decompositions."""


def balance(total: int, parts: int) -> list[int]:
    """Block sizes for ``total`` points over ``parts`` blocks.

    Sizes are non-increasing and differ by at most one.
    """
    if parts < 1:
        raise PartitionError(f"need at least one partition, got {parts}")
    if total < parts:
        raise PartitionError(f"cannot spread {total} points over {parts} partitions")
    base, extra = divmod(total, parts)
    return [base + 1] * extra + [base] * (parts - extra)


@dataclass(frozen=True)
class PartitionSpec:
    npx: int = 1  # axial partition count
    npz: int = 1  # azimuthal partition count

    _SCHEMA = {"npx": int, "npz": int}

    def __post_init__(self):
        if self.npx < 1 or self.npz < 1:
            raise ConfigError(f"partition counts must be >= 1, got npx={self.npx}, npz={self.npz}")

    @property
    def workers(self) -> int:
        return self.npx * self.npz

    @classmethod
    def from_mapping(cls, sec, source: str = "<config>") -> "PartitionSpec":
        return cls(**coerce_section(sec, cls._SCHEMA, source))


@dataclass(frozen=True)
class Block:
    """One worker's owned index ranges (half-open, global indices)."""

    rank: int
    px: int
    pz: int
    ax_lo: int
    ax_hi: int
    az_lo: int
    az_hi: int
    west: int | None      # axial neighbor toward the entrance, None at the boundary
    east: int | None      # axial neighbor toward the exit
    ring_prev: int        # azimuthal ring neighbors (may equal self)
    ring_next: int

    @property
    def ni(self) -> int:
        return self.ax_hi - self.ax_lo

    @property
    def nk(self) -> int:
        return self.az_hi - self.az_lo

    @property
    def entrance(self) -> bool:
        return self.west is None

    @property
    def exit(self) -> bool:
        return self.east is None


@dataclass(frozen=True)
class PartitionTopology:
    n_axial: int
    n_radial: int
    n_azimuthal: int
    npx: int
    npz: int
    blocks: tuple[Block, ...]

    @property
    def workers(self) -> int:
        return self.npx * self.npz

    @property
    def n_az_distinct(self) -> int:
        """Distinct azimuthal stations; the closing station repeats the first."""
        return self.n_azimuthal - 1

    def block(self, rank: int) -> Block:
        return self.blocks[rank]

    def ring(self, px: int) -> tuple[Block, ...]:
        """Blocks sharing the axial range ``px``, in azimuthal order."""
        return tuple(self.blocks[px * self.npz + pz] for pz in range(self.npz))

    def wrap_azimuthal(self, k: int) -> int:
        """Map any global azimuthal index onto a distinct owned station."""
        return k % self.n_az_distinct


def build_topology(grid_shape, parts: PartitionSpec) -> PartitionTopology:
    """Lay out ``npx * npz`` blocks over the grid.

    ``grid_shape`` is ``(n_axial, n_radial, n_azimuthal)`` or an object with
    those attributes.  Each block keeps at least MIN_BLOCK points per
    partitioned direction so both ghost layers always come from a single
    neighbor.
    """
    if hasattr(grid_shape, "n_axial"):
        n_ax, n_rad, n_az = grid_shape.n_axial, grid_shape.n_radial, grid_shape.n_azimuthal
    else:
        n_ax, n_rad, n_az = grid_shape
    npx, npz = parts.npx, parts.npz

    ax_sizes = balance(n_ax, npx)
    az_sizes = balance(n_az, npz)
    if min(ax_sizes) < MIN_BLOCK:
        raise PartitionError(
            f"axial blocks of {min(ax_sizes)} point(s) from {n_ax}/{npx}; need >= {MIN_BLOCK}")
    if min(az_sizes) < MIN_BLOCK:
        raise PartitionError(
            f"azimuthal blocks of {min(az_sizes)} point(s) from {n_az}/{npz}; need >= {MIN_BLOCK}")

    ax_offsets = [0]
    for s in ax_sizes:
        ax_offsets.append(ax_offsets[-1] + s)
    az_offsets = [0]
    for s in az_sizes:
        az_offsets.append(az_offsets[-1] + s)

    blocks = []
    for px in range(npx):
        for pz in range(npz):
            rank = px * npz + pz
            west = (px - 1) * npz + pz if px > 0 else None
            east = (px + 1) * npz + pz if px < npx - 1 else None
            ring_prev = px * npz + (pz - 1) % npz
            ring_next = px * npz + (pz + 1) % npz
            blocks.append(Block(
                rank=rank, px=px, pz=pz,
                ax_lo=ax_offsets[px], ax_hi=ax_offsets[px + 1],
                az_lo=az_offsets[pz], az_hi=az_offsets[pz + 1],
                west=west, east=east, ring_prev=ring_prev, ring_next=ring_next,
            ))
    return PartitionTopology(
        n_axial=n_ax, n_radial=n_rad, n_azimuthal=n_az,
        npx=npx, npz=npz, blocks=tuple(blocks),
    )
