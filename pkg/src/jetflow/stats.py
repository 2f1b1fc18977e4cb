"""Running jet statistics and derived profiles.

Means and RMS use the numerically stable one-pass update with population
normalization (divide by the sample count), and partial accumulations can
be merged exactly, so a restarted run reproduces the single-run result.
Averages over the azimuth use the distinct stations only; the superposed
closing station is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = ["RunningMoments", "accumulate_moments", "azimuthal_average",
           "extract_profile", "potential_core", "Profile", "CoreResult",
           "series_moments"]


@dataclass
class RunningMoments:
    """One-pass mean/RMS accumulator over arrays of a fixed shape."""

    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(()))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(()))

    def update(self, sample) -> "RunningMoments":
        sample = np.asarray(sample, dtype=np.float64)
        if self.count == 0:
            self.mean = np.zeros_like(sample)
            self.m2 = np.zeros_like(sample)
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (sample - self.mean)
        return self

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        """Combine two partial accumulations (exact, order-independent counts)."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean.copy()
            self.m2 = other.m2.copy()
            return self
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + other.m2 + delta * delta * (na * nb / n)
        self.count = n
        return self

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no samples accumulated")
        return self.m2 / self.count

    @property
    def rms(self) -> np.ndarray:
        return np.sqrt(self.variance)


@njit(cache=True, nogil=True)
def accumulate_moments(q, gamma, n, mean, m2):
    """Fold one conservative snapshot into (u, v, w, p) moment arrays.

    ``n`` is the sample count after this snapshot; ``mean``/``m2`` have
    shape (4, ni, nj, nk) and are updated in place.
    """
    ni, nj, nk = q.shape[1], q.shape[2], q.shape[3]
    gm1 = gamma - 1.0
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                rho = q[0, i, j, k]
                inv = 1.0 / rho
                u = q[1, i, j, k] * inv
                v = q[2, i, j, k] * inv
                w = q[3, i, j, k] * inv
                p = gm1 * (q[4, i, j, k]
                           - 0.5 * rho * (u * u + v * v + w * w))
                d0 = u - mean[0, i, j, k]
                mean[0, i, j, k] += d0 / n
                m2[0, i, j, k] += d0 * (u - mean[0, i, j, k])
                d1 = v - mean[1, i, j, k]
                mean[1, i, j, k] += d1 / n
                m2[1, i, j, k] += d1 * (v - mean[1, i, j, k])
                d2 = w - mean[2, i, j, k]
                mean[2, i, j, k] += d2 / n
                m2[2, i, j, k] += d2 * (w - mean[2, i, j, k])
                d3 = p - mean[3, i, j, k]
                mean[3, i, j, k] += d3 / n
                m2[3, i, j, k] += d3 * (p - mean[3, i, j, k])


def azimuthal_average(a: np.ndarray, closed: bool = True) -> np.ndarray:
    """Mean over the last (azimuthal) axis.

    With ``closed`` the final station duplicates the first and is dropped
    before averaging.
    """
    if closed:
        if a.shape[-1] < 2:
            raise ValueError("closed ring needs at least 2 stations")
        a = a[..., :-1]
    return a.mean(axis=-1)


@dataclass(frozen=True)
class Profile:
    """Radial profile extracted at the axial station nearest a target."""

    x_target: float
    x_actual: float
    index: int
    r: np.ndarray
    values: np.ndarray


def extract_profile(x_stations: np.ndarray, r_stations: np.ndarray,
                    a: np.ndarray, x_target: float,
                    scale: float = 1.0) -> Profile:
    """Pick the nearest axial plane of an (n_ax, n_rad) field, scaled."""
    x_stations = np.asarray(x_stations, dtype=np.float64)
    if a.shape[0] != x_stations.size or a.shape[1] != np.asarray(r_stations).size:
        raise ValueError(f"field shape {a.shape} does not match station tables")
    idx = int(np.argmin(np.abs(x_stations - x_target)))
    return Profile(x_target=float(x_target), x_actual=float(x_stations[idx]),
                   index=idx, r=np.asarray(r_stations, dtype=np.float64).copy(),
                   values=a[idx] / scale)


@dataclass(frozen=True)
class CoreResult:
    """Potential-core geometry from the 95 percent velocity rule."""

    length: float
    radii: np.ndarray        # per axial station; 0 where the core has closed
    end_index: int           # last station still inside the core, -1 if none


def potential_core(x_stations: np.ndarray, r_stations: np.ndarray,
                   u_bar: np.ndarray, u_jet: float,
                   threshold: float = 0.95) -> CoreResult:
    """Core radius per station and the contiguous-from-entrance core length.

    A station belongs to the core while any radius keeps the mean axial
    velocity at or above ``threshold * u_jet``; its core radius is the
    largest such radius.
    """
    x = np.asarray(x_stations, dtype=np.float64)
    r = np.asarray(r_stations, dtype=np.float64)
    if u_bar.shape != (x.size, r.size):
        raise ValueError(f"u_bar shape {u_bar.shape} does not match stations")
    mask = u_bar >= threshold * u_jet
    radii = np.where(mask.any(axis=1),
                     r[np.where(mask, np.arange(r.size), -1).max(axis=1)],
                     0.0)
    inside = mask.any(axis=1)
    end = -1
    for i, ok in enumerate(inside):
        if not ok:
            break
        end = i
    length = float(x[end] - x[0]) if end >= 0 else 0.0
    return CoreResult(length=length, radii=radii, end_index=end)


def series_moments(records) -> RunningMoments:
    """Accumulate (u, v, w, p) moments over conservative snapshots.

    ``records`` yields (5, ...) conservative arrays plus a gamma value as
    (q, gamma) pairs; use ``RunningMoments.merge`` to combine legs.
    """
    acc = RunningMoments()
    for q, gamma in records:
        rho = q[0]
        u = q[1] / rho
        v = q[2] / rho
        w = q[3] / rho
        p = (gamma - 1.0) * (q[4] - 0.5 * rho * (u * u + v * v + w * w))
        acc.update(np.stack([u, v, w, p]))
    return acc
