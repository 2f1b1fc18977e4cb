"""Gas model, state conversions and run configuration.

Working units are jet-referenced: the entrance jet carries density 1 and
axial velocity 1, lengths are measured in entrance diameters D, and time in
D over jet velocity.  The gas constant defaults to R = 1/(gamma*mach_jet**2)
so the jet temperature is 1 and the ambient pressure comes out as
1/(gamma*mach_jet**2) for a pressure ratio of one.  Reference viscosity is
1/reynolds at the jet temperature; the Sutherland ratio converts to kelvin
through ``t_ref``.

State arrays are variable-major ``float64``:

* conservative ``q``: rows ``[rho, rho*u, rho*v, rho*w, e]`` where ``e`` is
  total energy per volume, ``e = p/(gamma-1) + rho*(u^2+v^2+w^2)/2``,
* primitive ``w``: rows ``[rho, u, v, w, p, T]`` with ``T = p/(rho*R)``.

Velocity components are Cartesian (x axial, y-z the cross plane) at every
node, including on the cylindrical grid.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

__all__ = [
    "ConfigError",
    "InvalidStateError",
    "FlowConfig",
    "parse_keyvalues",
    "section",
    "primitive_from_conservative",
    "conservative_from_primitive",
    "sutherland_viscosity",
    "conductivity",
    "speed_of_sound",
]

SUTHERLAND_S1_DEFAULT = 110.4  # kelvin


class ConfigError(ValueError):
    """Raised for malformed configuration text or invalid field values."""


class InvalidStateError(ValueError):
    """Raised when a state violates positivity (rho > 0, p > 0, e > 0)."""


def parse_keyvalues(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines into ``{key: (value, line_number)}``.

    Blank lines and ``#`` comments are ignored.  Keys may be dotted to form
    namespaces (``flow.gamma``).  Duplicate keys are an error.
    """
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first at line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def read_keyvalues(path: str | Path) -> dict[str, tuple[str, int]]:
    path = Path(path)
    return parse_keyvalues(path.read_text(), source=str(path))


def section(mapping: dict[str, tuple[str, int]], prefix: str) -> dict[str, tuple[str, int]]:
    """Extract ``prefix.*`` keys with the prefix stripped."""
    dot = prefix + "."
    return {k[len(dot):]: v for k, v in mapping.items() if k.startswith(dot)}


def _coerce(kind, key: str, value: str, lineno: int, source: str):
    try:
        if kind is bool:
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError:
        raise ConfigError(
            f"{source}:{lineno}: cannot parse {key} = {value!r} as {kind.__name__}"
        ) from None


def coerce_section(sec, schema, source: str = "<config>") -> dict:
    """Coerce a parsed section against ``{key: type}``, rejecting unknown keys."""
    out = {}
    for key, (value, lineno) in sec.items():
        if key not in schema:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(schema[key], key, value, lineno, source)
    return out


@dataclass(frozen=True)
class FlowConfig:
    """Physical and scheme constants for one run."""

    gamma: float = 1.4
    prandtl: float = 0.72
    prandtl_sgs: float = 0.9
    mach_jet: float = 1.4
    reynolds: float = 1.57e6
    pressure_ratio: float = 1.0
    temperature_ratio: float = 1.0
    dt: float = 1.0e-4
    sutherland_s1: float = SUTHERLAND_S1_DEFAULT
    t_ref: float = 300.0          # kelvin at the jet reference temperature
    mu_ref: float | None = None   # defaults to 1/reynolds
    cp: float | None = None       # defaults to gamma*R/(gamma-1), R = 1/(gamma*mach^2)
    cv: float | None = None
    k2: float = 0.5               # second-difference dissipation constant
    k4: float = 1.0 / 64.0        # fourth-difference dissipation constant
    sgs_enabled: bool = False
    coflow_velocity: float = 0.0  # ambient axial velocity, jet units
    exit_pressure: float | None = None  # defaults to ambient pressure

    _SCHEMA = {
        "gamma": float, "prandtl": float, "prandtl_sgs": float, "mach_jet": float,
        "reynolds": float, "pressure_ratio": float, "temperature_ratio": float,
        "dt": float, "sutherland_s1": float, "t_ref": float, "mu_ref": float,
        "cp": float, "cv": float, "k2": float, "k4": float, "sgs_enabled": bool,
        "coflow_velocity": float, "exit_pressure": float,
    }

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise ConfigError(f"gamma must exceed 1, got {self.gamma}")
        if self.mach_jet <= 0.0:
            raise ConfigError(f"mach_jet must be positive, got {self.mach_jet}")
        for name in ("prandtl", "prandtl_sgs", "reynolds", "pressure_ratio",
                     "temperature_ratio", "dt", "t_ref"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sutherland_s1 < 0.0:
            raise ConfigError(f"sutherland_s1 must be non-negative, got {self.sutherland_s1}")
        if self.k2 < 0.0 or self.k4 < 0.0:
            raise ConfigError("dissipation constants k2, k4 must be non-negative")
        if self.mu_ref is None:
            object.__setattr__(self, "mu_ref", 1.0 / self.reynolds)
        if self.mu_ref <= 0.0:
            raise ConfigError(f"mu_ref must be positive, got {self.mu_ref}")
        if (self.cp is None) != (self.cv is None):
            raise ConfigError("cp and cv must be given together or both left default")
        if self.cp is None:
            r = 1.0 / (self.gamma * self.mach_jet ** 2)
            object.__setattr__(self, "cv", r / (self.gamma - 1.0))
            object.__setattr__(self, "cp", self.gamma * r / (self.gamma - 1.0))
        if not self.cp > self.cv > 0.0:
            raise ConfigError(f"need cp > cv > 0, got cp={self.cp}, cv={self.cv}")
        if self.exit_pressure is not None and self.exit_pressure <= 0.0:
            raise ConfigError(f"exit_pressure must be positive, got {self.exit_pressure}")

    # -- derived constants ------------------------------------------------

    @property
    def gas_constant(self) -> float:
        return self.cp - self.cv

    @property
    def u_jet(self) -> float:
        return 1.0

    @property
    def p_jet(self) -> float:
        # rho_jet * c_jet^2 / gamma with rho_jet = 1, c_jet = 1/mach
        return 1.0 / (self.gamma * self.mach_jet ** 2)

    @property
    def t_jet(self) -> float:
        return self.p_jet / self.gas_constant

    @property
    def p_ambient(self) -> float:
        return self.p_jet / self.pressure_ratio

    @property
    def t_ambient(self) -> float:
        return self.t_jet / self.temperature_ratio

    @property
    def rho_ambient(self) -> float:
        return self.p_ambient / (self.gas_constant * self.t_ambient)

    @property
    def p_exit(self) -> float:
        return self.p_ambient if self.exit_pressure is None else self.exit_pressure

    def ambient_primitive(self) -> np.ndarray:
        """Quiescent-to-coflow ambient state, rows [rho, u, v, w, p, T]."""
        return np.array([
            self.rho_ambient, self.coflow_velocity, 0.0, 0.0,
            self.p_ambient, self.t_ambient,
        ])

    def jet_primitive(self) -> np.ndarray:
        """Entrance jet state, rows [rho, u, v, w, p, T]."""
        return np.array([1.0, self.u_jet, 0.0, 0.0, self.p_jet, self.t_jet])

    # -- serialization -----------------------------------------------------

    def canonical_text(self) -> str:
        items = []
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            items.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(sorted(items)) + "\n"

    def digest(self) -> str:
        return hashlib.blake2b(self.canonical_text().encode(), digest_size=16).hexdigest()

    @classmethod
    def from_mapping(cls, sec, source: str = "<config>") -> "FlowConfig":
        return cls(**coerce_section(sec, cls._SCHEMA, source))

    @classmethod
    def from_file(cls, path: str | Path, prefix: str = "flow") -> "FlowConfig":
        mapping = read_keyvalues(path)
        return cls.from_mapping(section(mapping, prefix), source=str(path))


# -- state conversions ----------------------------------------------------

def primitive_from_conservative(q: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    """Conservative rows [rho, rho*u, rho*v, rho*w, e] to [rho, u, v, w, p, T].

    Raises InvalidStateError when density, pressure or energy is not positive.
    """
    q = np.asarray(q, dtype=np.float64)
    rho = q[0]
    if not np.all(rho > 0.0):
        raise InvalidStateError("non-positive density")
    if not np.all(q[4] > 0.0):
        raise InvalidStateError("non-positive total energy")
    u = q[1] / rho
    v = q[2] / rho
    w = q[3] / rho
    p = (cfg.gamma - 1.0) * (q[4] - 0.5 * rho * (u * u + v * v + w * w))
    if not np.all(p > 0.0):
        raise InvalidStateError("non-positive pressure")
    t = p / (rho * cfg.gas_constant)
    return np.stack([rho, u, v, w, p, t])


def conservative_from_primitive(w: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    """Primitive rows [rho, u, v, w, p, ...] to conservative rows."""
    w = np.asarray(w, dtype=np.float64)
    rho, u, v, vz, p = w[0], w[1], w[2], w[3], w[4]
    if not np.all(rho > 0.0):
        raise InvalidStateError("non-positive density")
    if not np.all(p > 0.0):
        raise InvalidStateError("non-positive pressure")
    e = p / (cfg.gamma - 1.0) + 0.5 * rho * (u * u + v * v + vz * vz)
    return np.stack([rho, rho * u, rho * v, rho * vz, e])


def speed_of_sound(rho, p, cfg: FlowConfig):
    return np.sqrt(cfg.gamma * np.asarray(p) / np.asarray(rho))


def sutherland_viscosity(t, cfg: FlowConfig):
    """Molecular viscosity at temperature ``t`` (jet units).

    The ratio is evaluated in kelvin via ``t_ref``, anchored so that the jet
    reference temperature returns ``mu_ref`` exactly.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0.0):
        raise InvalidStateError("non-positive temperature")
    ratio = t / cfg.t_jet
    s1 = cfg.sutherland_s1
    return cfg.mu_ref * ratio ** 1.5 * (cfg.t_ref + s1) / (cfg.t_ref * ratio + s1)


def conductivity(mu, mu_sgs, cfg: FlowConfig):
    """Thermal conductivities (kappa, kappa_sgs) from the viscosities."""
    kappa = np.asarray(mu) * cfg.cp / cfg.prandtl
    kappa_sgs = np.asarray(mu_sgs) * cfg.cp / cfg.prandtl_sgs
    return kappa, kappa_sgs
