"""Per-partition file formats.

Everything on disk is one little-endian container format ("JZSC"):

    magic   4 bytes  "JZSC"
    version u32      currently 1
    count   u32      header records, sorted by key
            repeat:  u16 key length, key (utf-8), u32 value length, value
    count   u32      array blocks
            repeat:  u16 name length, name, u8 dtype tag (0 = float64),
                     u8 ndim, ndim x u64 dims, row-major data
    check   8 bytes  blake2b-64 of every preceding byte

Mesh files store block coordinates only; metric terms are recomputed by
each worker at startup so they are identical to a single-block evaluation.
Checkpoints store one owned conservative block per worker plus enough
metadata to refuse a mismatched restart.  Snapshot series append fully
checksummed records to a base container so a torn tail never hides older
records.  An ASCII VTK export covers quick inspection in standard viewers.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, read_keyvalues, section
from .meshgen import GHOST, GlobalGrid, GridSpec, generate
from .partition import PartitionSpec, PartitionTopology, build_topology

__all__ = ["StorageError", "VersionError", "ChecksumError", "ExtentError",
           "CompatibilityError", "write_container", "read_container",
           "write_mesh_file", "read_mesh_file", "write_partition_set",
           "load_partition_set", "PartitionSet", "write_checkpoint",
           "read_checkpoint", "require_compatible", "SnapshotSeries",
           "export_vtk"]

MAGIC = b"JZSC"
FORMAT_VERSION = 1
_DTYPE_TAGS = {0: np.dtype("<f8")}
_CHECK_BYTES = 8


class StorageError(RuntimeError):
    pass


class VersionError(StorageError):
    pass


class ChecksumError(StorageError):
    pass


class ExtentError(StorageError):
    pass


class CompatibilityError(StorageError):
    pass


def _container_bytes(headers: dict, arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    items = sorted((str(k), str(v)) for k, v in headers.items())
    buf.write(struct.pack("<I", len(items)))
    for key, value in items:
        kb = key.encode()
        vb = value.encode()
        buf.write(struct.pack("<H", len(kb)))
        buf.write(kb)
        buf.write(struct.pack("<I", len(vb)))
        buf.write(vb)
    names = sorted(arrays)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BB", 0, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + hashlib.blake2b(body, digest_size=_CHECK_BYTES).digest()


def _parse_container(blob: bytes, source: str = "<blob>"):
    if len(blob) < len(MAGIC) + 4 + _CHECK_BYTES:
        raise StorageError(f"{source}: truncated container")
    if blob[:4] != MAGIC:
        raise StorageError(f"{source}: bad magic {blob[:4]!r}")
    body, check = blob[:-_CHECK_BYTES], blob[-_CHECK_BYTES:]
    if hashlib.blake2b(body, digest_size=_CHECK_BYTES).digest() != check:
        raise ChecksumError(f"{source}: checksum mismatch")
    off = 4
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != FORMAT_VERSION:
        raise VersionError(f"{source}: format version {version}, expected {FORMAT_VERSION}")
    (nhdr,) = struct.unpack_from("<I", body, off)
    off += 4
    headers: dict[str, str] = {}
    for _ in range(nhdr):
        (klen,) = struct.unpack_from("<H", body, off)
        off += 2
        key = body[off:off + klen].decode()
        off += klen
        (vlen,) = struct.unpack_from("<I", body, off)
        off += 4
        headers[key] = body[off:off + vlen].decode()
        off += vlen
    (narr,) = struct.unpack_from("<I", body, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(narr):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + nlen].decode()
        off += nlen
        tag, ndim = struct.unpack_from("<BB", body, off)
        off += 2
        if tag not in _DTYPE_TAGS:
            raise StorageError(f"{source}: unknown dtype tag {tag} for array {name!r}")
        dims = struct.unpack_from(f"<{ndim}Q", body, off)
        off += 8 * ndim
        dtype = _DTYPE_TAGS[tag]
        count = int(np.prod(dims)) if ndim else 1
        nbytes = count * dtype.itemsize
        if off + nbytes > len(body):
            raise StorageError(f"{source}: array {name!r} runs past the container")
        arrays[name] = np.frombuffer(body[off:off + nbytes], dtype=dtype).reshape(dims).copy()
        off += nbytes
    if off != len(body):
        raise StorageError(f"{source}: {len(body) - off} trailing byte(s)")
    return headers, arrays


def write_container(path: str | Path, headers: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(_container_bytes(headers, arrays))


def read_container(path: str | Path):
    return _parse_container(Path(path).read_bytes(), source=str(path))


# -- mesh partition sets -----------------------------------------------------

def write_mesh_file(path: str | Path, coords: np.ndarray, headers: dict) -> None:
    hdr = dict(headers)
    hdr.setdefault("kind", "mesh")
    write_container(path, hdr, {"coords": coords})


def read_mesh_file(path: str | Path):
    headers, arrays = read_container(path)
    if headers.get("kind") != "mesh":
        raise CompatibilityError(f"{path}: not a mesh file (kind={headers.get('kind')!r})")
    return headers, arrays["coords"]


@dataclass(frozen=True)
class PartitionSet:
    """A generated mesh decomposition on disk."""

    spec: GridSpec
    parts: PartitionSpec
    topo: PartitionTopology
    mesh_paths: tuple[Path, ...]
    manifest: Path


def write_partition_set(directory: str | Path, spec: GridSpec, parts: PartitionSpec,
                        grid: GlobalGrid | None = None) -> PartitionSet:
    """Generate per-rank extended-block mesh files plus a text manifest."""
    directory = Path(directory)
    mesh_dir = directory / "meshes"
    mesh_dir.mkdir(parents=True, exist_ok=True)
    if grid is None:
        grid = generate(spec)
    topo = build_topology(spec, parts)
    digest = spec.digest()
    paths = []
    for blk in topo.blocks:
        coords = grid.coords_block(topo, blk.rank)
        path = mesh_dir / f"rank-{blk.rank:04d}.jzsc"
        write_mesh_file(path, coords, {
            "kind": "mesh", "rank": blk.rank,
            "ax_lo": blk.ax_lo, "ax_hi": blk.ax_hi,
            "az_lo": blk.az_lo, "az_hi": blk.az_hi,
            "npx": parts.npx, "npz": parts.npz,
            "grid_digest": digest,
        })
        paths.append(path)
    lines = ["# mesh partition manifest"]
    for f in ("n_axial", "n_radial", "n_azimuthal", "length", "height",
              "lip_radius", "stretch_axial", "stretch_radial"):
        lines.append(f"grid.{f} = {getattr(spec, f)!r}")
    lines.append(f"partition.npx = {parts.npx}")
    lines.append(f"partition.npz = {parts.npz}")
    lines.append(f"set.grid_digest = {digest}")
    for blk in topo.blocks:
        lines.append(f"set.mesh.{blk.rank} = meshes/rank-{blk.rank:04d}.jzsc")
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return PartitionSet(spec=spec, parts=parts, topo=topo,
                        mesh_paths=tuple(paths), manifest=manifest)


def load_partition_set(manifest: str | Path) -> PartitionSet:
    manifest = Path(manifest)
    mapping = read_keyvalues(manifest)
    spec = GridSpec.from_mapping(section(mapping, "grid"), source=str(manifest))
    parts = PartitionSpec.from_mapping(section(mapping, "partition"), source=str(manifest))
    topo = build_topology(spec, parts)
    set_sec = section(mapping, "set")
    digest, _ = set_sec.pop("grid_digest", (None, 0))
    if digest != spec.digest():
        raise CompatibilityError(
            f"{manifest}: grid digest {digest} does not match the grid keys")
    paths = []
    for rank in range(topo.workers):
        entry = set_sec.pop(f"mesh.{rank}", None)
        if entry is None:
            raise ConfigError(f"{manifest}: missing set.mesh.{rank}")
        paths.append(manifest.parent / entry[0])
    if set_sec:
        stray = sorted(set_sec)[0]
        raise ConfigError(f"{manifest}: unexpected key set.{stray}")
    return PartitionSet(spec=spec, parts=parts, topo=topo,
                        mesh_paths=tuple(paths), manifest=manifest)


def mesh_block_headers_check(headers: dict, blk, digest: str, path) -> None:
    """Refuse a mesh file that disagrees with the manifest topology."""
    if headers.get("grid_digest") != digest:
        raise CompatibilityError(f"{path}: grid digest mismatch")
    for name, want in (("rank", blk.rank), ("ax_lo", blk.ax_lo), ("ax_hi", blk.ax_hi),
                       ("az_lo", blk.az_lo), ("az_hi", blk.az_hi)):
        got = headers.get(name)
        if got is None or int(got) != want:
            raise ExtentError(f"{path}: header {name}={got!r}, manifest says {want}")


# -- checkpoints -------------------------------------------------------------

def write_checkpoint(path: str | Path, q_owned: np.ndarray, iteration: int,
                     time_value: float, meta: dict) -> None:
    hdr = dict(meta)
    hdr.update({"kind": "checkpoint", "iteration": iteration,
                "time": repr(float(time_value))})
    write_container(path, hdr, {"q": q_owned})


def read_checkpoint(path: str | Path):
    headers, arrays = read_container(path)
    if headers.get("kind") != "checkpoint":
        raise CompatibilityError(
            f"{path}: not a checkpoint (kind={headers.get('kind')!r})")
    return headers, arrays["q"], int(headers["iteration"]), float(headers["time"])


def require_compatible(headers: dict, expected: dict, q_shape, expect_shape,
                       path) -> None:
    """Validate checkpoint metadata and block extents before a restart."""
    for key, want in expected.items():
        got = headers.get(key)
        if got is None or str(got) != str(want):
            raise CompatibilityError(
                f"{path}: checkpoint {key}={got!r} incompatible with {want!r}")
    if tuple(q_shape) != tuple(expect_shape):
        raise ExtentError(
            f"{path}: stored block {tuple(q_shape)}, expected {tuple(expect_shape)}")


# -- snapshot series ---------------------------------------------------------

class SnapshotSeries:
    """Append-only record series: a base container plus framed records.

    Each record is a complete checksummed container prefixed by its byte
    length, so a torn tail is detected without losing earlier records.
    """

    def __init__(self, path: str | Path, base_headers: dict):
        self.path = Path(path)
        self.base_headers = base_headers

    @classmethod
    def create(cls, path: str | Path, headers: dict) -> "SnapshotSeries":
        hdr = dict(headers)
        hdr.setdefault("kind", "snapshot-series")
        Path(path).write_bytes(_container_bytes(hdr, {}))
        return cls(path, hdr)

    @classmethod
    def open(cls, path: str | Path) -> "SnapshotSeries":
        blob = Path(path).read_bytes()
        base, _ = cls._split_base(blob, str(path))
        headers, _ = _parse_container(base, source=str(path))
        if headers.get("kind") != "snapshot-series":
            raise CompatibilityError(f"{path}: not a snapshot series")
        return cls(path, headers)

    @staticmethod
    def _split_base(blob: bytes, source: str):
        # the base container ends where the first record length prefix begins;
        # reconstruct by parsing incrementally: base never contains arrays with
        # unknown length, so parse once and measure.
        headers_end = SnapshotSeries._container_end(blob, source)
        return blob[:headers_end], blob[headers_end:]

    @staticmethod
    def _container_end(blob: bytes, source: str) -> int:
        if blob[:4] != MAGIC:
            raise StorageError(f"{source}: bad magic")
        off = 8
        (nhdr,) = struct.unpack_from("<I", blob, off)
        off += 4
        for _ in range(nhdr):
            (klen,) = struct.unpack_from("<H", blob, off)
            off += 2 + klen
            (vlen,) = struct.unpack_from("<I", blob, off)
            off += 4 + vlen
        (narr,) = struct.unpack_from("<I", blob, off)
        off += 4
        for _ in range(narr):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2 + nlen
            _, ndim = struct.unpack_from("<BB", blob, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}Q", blob, off)
            off += 8 * ndim
            off += int(np.prod(dims)) * 8 if ndim else 8
        return off + _CHECK_BYTES

    def append(self, headers: dict, arrays: dict[str, np.ndarray]) -> None:
        hdr = dict(headers)
        hdr.setdefault("kind", "snapshot")
        blob = _container_bytes(hdr, arrays)
        with open(self.path, "ab") as fh:
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)

    def records(self, tolerate_torn: bool = False):
        """Yield (headers, arrays) per record; a torn tail raises unless tolerated."""
        blob = self.path.read_bytes()
        _, rest = self._split_base(blob, str(self.path))
        off = 0
        index = 0
        while off < len(rest):
            if off + 8 > len(rest):
                if tolerate_torn:
                    return
                raise ChecksumError(f"{self.path}: torn record length at tail")
            (nbytes,) = struct.unpack_from("<Q", rest, off)
            off += 8
            chunk = rest[off:off + nbytes]
            if len(chunk) < nbytes:
                if tolerate_torn:
                    return
                raise ChecksumError(f"{self.path}: record {index} truncated")
            try:
                yield _parse_container(chunk, source=f"{self.path}[{index}]")
            except ChecksumError:
                if tolerate_torn:
                    return
                raise
            off += nbytes
            index += 1

    def scan(self) -> tuple[int, bool]:
        """Count readable records and report whether the tail is torn."""
        count = 0
        try:
            for _ in self.records(tolerate_torn=False):
                count += 1
            return count, False
        except ChecksumError:
            return count, True


# -- VTK export --------------------------------------------------------------

def export_vtk(path: str | Path, coords: np.ndarray,
               fields: dict[str, np.ndarray], title: str = "jetflow") -> None:
    """Legacy ASCII structured-grid file; fields are scalars (ni,nj,nk) or
    vectors (3,ni,nj,nk) on the same nodes as ``coords``."""
    ni, nj, nk = coords.shape[1:]
    npts = ni * nj * nk

    def _points(arr3):
        # VTK lists the first dimension fastest
        flat = arr3.reshape(3, -1, order="C")
        order = np.arange(npts).reshape(ni, nj, nk).transpose(2, 1, 0).ravel()
        return flat[:, order]

    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET STRUCTURED_GRID", f"DIMENSIONS {ni} {nj} {nk}",
             f"POINTS {npts} double"]
    pts = _points(np.asarray(coords, dtype=np.float64))
    lines.extend(" ".join(f"{pts[c, n]:.10g}" for c in range(3)) for n in range(npts))
    lines.append(f"POINT_DATA {npts}")
    for name in sorted(fields):
        arr = np.asarray(fields[name], dtype=np.float64)
        if arr.ndim == 4 and arr.shape[0] == 3:
            vec = _points(arr)
            lines.append(f"VECTORS {name} double")
            lines.extend(" ".join(f"{vec[c, n]:.10g}" for c in range(3))
                         for n in range(npts))
        elif arr.ndim == 3:
            flat = arr.transpose(2, 1, 0).ravel()
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{x:.10g}" for x in flat)
        else:
            raise StorageError(f"field {name!r} has unsupported shape {arr.shape}")
    Path(path).write_text("\n".join(lines) + "\n")
