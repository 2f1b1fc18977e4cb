"""Shared builders: synthetic channel blocks and small jet cases.

The channel helpers build ghost-extended blocks on a smooth curvilinear
box whose last index is a periodic ring, mirroring the solver's layout
(clamped axial ghosts at physical ends, one superposed closing station).
They let manufactured-solution tests drive the real kernels without the
coordinate singularity of the jet axis.
"""

import numpy as np
import pytest
from hypothesis import settings

from jetflow.core import FlowConfig, conservative_from_primitive
from jetflow.meshgen import GHOST, GridSpec, compute_metrics, generate
from jetflow.numerics import owned_region
from jetflow.partition import PartitionSpec, build_topology

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def channel_maps(stretch: float = 0.15):
    """Monotone smooth maps of the unit cube; z is periodic with period 1."""

    def xmap(s):
        return s + stretch * np.sin(np.pi * s) / np.pi

    def ymap(s):
        return 0.8 * (s + stretch * np.sin(np.pi * s) / np.pi)

    def zmap(s):
        return s + stretch * np.sin(2.0 * np.pi * s) / (2.0 * np.pi)

    return xmap, ymap, zmap


def channel_coords(nx: int, ny: int, nzd: int, stretch: float = 0.15):
    """Extended block coordinates: clamped axial ghosts, wrapped ring.

    ``nzd`` counts distinct ring stations; the owned range carries one
    extra superposed closing station, like the serial solver block.
    """
    xmap, ymap, zmap = channel_maps(stretch)
    gi = np.clip(np.arange(-GHOST, nx + GHOST), 0, nx - 1)
    x = xmap(gi / (nx - 1))
    y = ymap(np.arange(ny) / (ny - 1))
    kk = np.arange(-GHOST, nzd + 1 + GHOST)
    z = zmap(kk / nzd)
    shape = (x.size, y.size, z.size)
    return np.stack([
        np.ascontiguousarray(np.broadcast_to(x[:, None, None], shape)),
        np.ascontiguousarray(np.broadcast_to(y[None, :, None], shape)),
        np.ascontiguousarray(np.broadcast_to(z[None, None, :], shape)),
    ])


def channel_mesh(nx: int, ny: int, nzd: int, stretch: float = 0.15):
    coords = channel_coords(nx, ny, nzd, stretch)
    return compute_metrics(
        coords, west_physical=True, east_physical=True, axis_low=False,
        ghost_axial=GHOST, check_owned=owned_region(coords.shape[1:]))


def fill_state(mesh, wfunc, cfg: FlowConfig) -> np.ndarray:
    """Conservative state at every extended node from primitive fields.

    ``wfunc(x, y, z)`` returns rows [rho, u, v, w, p]; fields periodic in
    z keep the ring ghosts consistent automatically.
    """
    x, y, z = mesh.coords
    w = np.asarray(wfunc(x, y, z), dtype=np.float64)
    return conservative_from_primitive(w, cfg)


def smooth_primitive(x, y, z):
    """A gentle fully 3-D manufactured field, periodic in z (period 1)."""
    tz = 2.0 * np.pi * z
    rho = 1.0 + 0.12 * np.sin(1.3 * x) * np.cos(1.1 * y) * np.cos(tz)
    u = 0.35 + 0.10 * np.cos(1.1 * x) * np.sin(0.9 * y) * np.sin(tz)
    v = 0.05 * np.sin(1.7 * x + 0.4) * np.cos(0.8 * y) * np.cos(tz + 0.7)
    w = 0.05 * np.cos(0.9 * x) * np.sin(1.2 * y + 0.3) * np.sin(tz + 1.1)
    p = 0.5 + 0.08 * np.cos(1.2 * x) * np.cos(0.7 * y) * np.sin(tz + 0.2)
    return np.stack(np.broadcast_arrays(rho, u, v, w, p))


@pytest.fixture(scope="session")
def cfg() -> FlowConfig:
    return FlowConfig()


@pytest.fixture(scope="session")
def small_spec() -> GridSpec:
    return GridSpec(n_axial=24, n_radial=16, n_azimuthal=13,
                    length=10.0, height=5.0)


@pytest.fixture(scope="session")
def small_grid(small_spec):
    return generate(small_spec)


@pytest.fixture(scope="session")
def small_serial_topo(small_spec):
    return build_topology(small_spec, PartitionSpec(1, 1))


@pytest.fixture(scope="session")
def compiled():
    """Warm the jit cache once so timing-sensitive tests stay honest."""
    from jetflow.integrate import warmup
    warmup()
