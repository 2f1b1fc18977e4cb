"""Container format, partition sets, checkpoints, snapshot series, VTK."""

import hashlib
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from jetflow.core import ConfigError
from jetflow.meshgen import GridSpec, generate
from jetflow.partition import PartitionSpec, build_topology
from jetflow.storage import (
    MAGIC,
    ChecksumError,
    CompatibilityError,
    ExtentError,
    SnapshotSeries,
    StorageError,
    VersionError,
    export_vtk,
    load_partition_set,
    mesh_block_headers_check,
    read_checkpoint,
    read_container,
    read_mesh_file,
    require_compatible,
    write_checkpoint,
    write_container,
    write_mesh_file,
    write_partition_set,
)


def sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "q": rng.normal(size=(5, 4, 3, 6)),
        "flat": rng.normal(size=17),
        "scalar": np.float64(rng.normal()),
    }


class TestContainer:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        path = tmp_path / "c.jzsc"
        arrays = sample_arrays()
        headers = {"kind": "test", "iteration": 12, "time": repr(0.125)}
        write_container(path, headers, arrays)
        got_h, got_a = read_container(path)
        assert got_h == {"kind": "test", "iteration": "12", "time": "0.125"}
        assert sorted(got_a) == sorted(arrays)
        for name, arr in arrays.items():
            # 0-d input is stored as a length-1 vector
            src = np.ascontiguousarray(arr, dtype="<f8")
            assert got_a[name].shape == src.shape
            assert got_a[name].tobytes() == src.tobytes()

    def test_single_byte_corruption_is_always_detected(self, tmp_path):
        path = tmp_path / "c.jzsc"
        write_container(path, {"kind": "test"}, sample_arrays(1))
        blob = bytearray(path.read_bytes())
        rng = np.random.default_rng(42)
        bad = tmp_path / "bad.jzsc"
        for _ in range(1000):
            off = int(rng.integers(0, len(blob)))
            flip = int(rng.integers(1, 256))
            corrupted = bytearray(blob)
            corrupted[off] ^= flip
            bad.write_bytes(bytes(corrupted))
            with pytest.raises(StorageError):
                read_container(bad)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "c.jzsc"
        write_container(path, {"kind": "test"}, sample_arrays(2))
        blob = path.read_bytes()
        for cut in (1, 7, 100, len(blob) - 5):
            path.write_bytes(blob[:len(blob) - cut])
            with pytest.raises(StorageError):
                read_container(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "c.jzsc"
        write_container(path, {"kind": "test"}, {})
        blob = path.read_bytes()
        body = MAGIC + struct.pack("<I", 99) + blob[8:-8]
        path.write_bytes(body + hashlib.blake2b(body, digest_size=8).digest())
        with pytest.raises(VersionError):
            read_container(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "c.jzsc"
        write_container(path, {"kind": "test"}, {})
        body = path.read_bytes()[:-8] + b"\x00"
        path.write_bytes(body + hashlib.blake2b(body, digest_size=8).digest())
        with pytest.raises(StorageError, match="trailing"):
            read_container(path)

    # reusing one tmp_path across examples is fine, the file is overwritten
    @settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(headers=st.dictionaries(
        st.text(st.characters(min_codepoint=33, max_codepoint=126),
                min_size=1, max_size=12),
        st.integers(-10**6, 10**6), max_size=4),
        seeds=st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=3))
    def test_roundtrip_property(self, headers, seeds, tmp_path):
        arrays = {}
        for n, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            shape = tuple(rng.integers(1, 5, size=int(rng.integers(1, 4))))
            arr = rng.normal(size=shape)
            if seed % 3 == 0:
                arr.flat[0] = np.nan  # payload bits must survive
            arrays[f"a{n}"] = arr
        path = tmp_path / "p.jzsc"
        write_container(path, headers, arrays)
        got_h, got_a = read_container(path)
        assert got_h == {str(k): str(v) for k, v in headers.items()}
        for name, arr in arrays.items():
            assert got_a[name].tobytes() == arr.tobytes()


class TestMeshFiles:
    def test_roundtrip_and_kind_guard(self, tmp_path):
        coords = np.arange(3 * 4 * 3 * 5, dtype=np.float64).reshape(3, 4, 3, 5)
        p = tmp_path / "m.jzsc"
        write_mesh_file(p, coords, {"rank": 0})
        headers, got = read_mesh_file(p)
        assert headers["kind"] == "mesh" and headers["rank"] == "0"
        assert got.tobytes() == coords.tobytes()
        q = tmp_path / "notmesh.jzsc"
        write_container(q, {"kind": "checkpoint"}, {"coords": coords})
        with pytest.raises(CompatibilityError):
            read_mesh_file(q)


@pytest.fixture(scope="module")
def pset_dir(tmp_path_factory, small_spec, small_grid):
    d = tmp_path_factory.mktemp("pset")
    write_partition_set(d, small_spec, PartitionSpec(2, 1), grid=small_grid)
    return d


class TestPartitionSet:
    def test_write_then_load(self, pset_dir, small_spec):
        ps = load_partition_set(pset_dir / "manifest.txt")
        assert ps.spec == small_spec
        assert (ps.parts.npx, ps.parts.npz) == (2, 1)
        assert ps.topo.workers == 2
        for rank, path in enumerate(ps.mesh_paths):
            headers, coords = read_mesh_file(path)
            blk = ps.topo.block(rank)
            mesh_block_headers_check(headers, blk, small_spec.digest(), path)
            assert coords.shape[1] == blk.ni + 4

    def test_digest_mismatch_refused(self, pset_dir, tmp_path):
        text = (pset_dir / "manifest.txt").read_text()
        hacked = tmp_path / "manifest.txt"
        hacked.write_text(text.replace("grid.length = 10.0",
                                       "grid.length = 12.0"))
        with pytest.raises(CompatibilityError, match="digest"):
            load_partition_set(hacked)

    def test_missing_rank_entry(self, pset_dir, tmp_path):
        lines = [l for l in (pset_dir / "manifest.txt").read_text().splitlines()
                 if not l.startswith("set.mesh.1")]
        hacked = tmp_path / "manifest.txt"
        hacked.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigError, match="set.mesh.1"):
            load_partition_set(hacked)

    def test_stray_set_key_rejected(self, pset_dir, tmp_path):
        text = (pset_dir / "manifest.txt").read_text()
        hacked = tmp_path / "manifest.txt"
        hacked.write_text(text + "set.bogus = 1\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_partition_set(hacked)

    def test_block_header_check_rejects_wrong_extent(self, pset_dir, small_spec):
        ps = load_partition_set(pset_dir / "manifest.txt")
        headers, _ = read_mesh_file(ps.mesh_paths[0])
        digest = small_spec.digest()
        with pytest.raises(CompatibilityError):
            mesh_block_headers_check(headers, ps.topo.block(0), "feed", "p")
        with pytest.raises(ExtentError):
            mesh_block_headers_check(headers, ps.topo.block(1), digest, "p")


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        q = np.random.default_rng(5).normal(size=(5, 4, 3, 6))
        p = tmp_path / "ck.jzsc"
        write_checkpoint(p, q, 42, 0.0042, {"rank": 1, "npx": 2})
        headers, got, it, t = read_checkpoint(p)
        assert (it, t) == (42, 0.0042)
        assert headers["rank"] == "1"
        assert got.tobytes() == q.tobytes()

    def test_kind_guard(self, tmp_path):
        p = tmp_path / "x.jzsc"
        write_container(p, {"kind": "mesh"}, {"q": np.zeros(3)})
        with pytest.raises(CompatibilityError):
            read_checkpoint(p)

    def test_require_compatible(self):
        headers = {"rank": "1", "npx": "2", "flow_digest": "abc"}
        require_compatible(headers, {"rank": 1, "npx": 2, "flow_digest": "abc"},
                           (5, 3, 3, 3), (5, 3, 3, 3), "p")
        with pytest.raises(CompatibilityError, match="npx"):
            require_compatible(headers, {"npx": 4}, (5,), (5,), "p")
        with pytest.raises(CompatibilityError):
            require_compatible({}, {"rank": 1}, (5,), (5,), "p")
        with pytest.raises(ExtentError):
            require_compatible(headers, {}, (5, 3, 3, 3), (5, 3, 3, 4), "p")


class TestSnapshotSeries:
    def _make(self, path, n=3):
        series = SnapshotSeries.create(path, {"rank": 0})
        rng = np.random.default_rng(9)
        arrays = []
        for i in range(n):
            a = rng.normal(size=(2, 3, 4))
            series.append({"iteration": i}, {"q": a})
            arrays.append(a)
        return series, arrays

    def test_append_and_read_back_in_order(self, tmp_path):
        p = tmp_path / "s.series"
        _, arrays = self._make(p)
        series = SnapshotSeries.open(p)
        assert series.base_headers["rank"] == "0"
        records = list(series.records())
        assert [h["iteration"] for h, _ in records] == ["0", "1", "2"]
        for (_, got), want in zip(records, arrays):
            assert got["q"].tobytes() == want.tobytes()
        assert series.scan() == (3, False)

    def test_torn_tail_is_tolerable_and_counted(self, tmp_path):
        p = tmp_path / "s.series"
        self._make(p, n=3)
        blob = p.read_bytes()
        p.write_bytes(blob[:-11])  # tear the last record
        series = SnapshotSeries.open(p)
        assert series.scan() == (2, True)
        assert len(list(series.records(tolerate_torn=True))) == 2
        with pytest.raises(ChecksumError):
            list(series.records())

    def test_torn_length_prefix(self, tmp_path):
        p = tmp_path / "s.series"
        self._make(p, n=2)
        with open(p, "ab") as fh:
            fh.write(b"\x05\x00\x00")  # partial length prefix
        series = SnapshotSeries.open(p)
        assert series.scan() == (2, True)

    def test_open_rejects_wrong_kind(self, tmp_path):
        p = tmp_path / "x.series"
        write_container(p, {"kind": "mesh"}, {})
        with pytest.raises(CompatibilityError):
            SnapshotSeries.open(p)


class TestVtkExport:
    def test_structure_and_point_order(self, tmp_path):
        ni, nj, nk = 2, 2, 2
        coords = np.arange(3 * 8, dtype=np.float64).reshape(3, ni, nj, nk)
        scal = np.arange(8, dtype=np.float64).reshape(ni, nj, nk)
        vec = np.stack([scal, scal + 10, scal + 20])
        p = tmp_path / "o.vtk"
        export_vtk(p, coords, {"s": scal, "v": vec}, title="case")
        lines = p.read_text().splitlines()
        assert lines[1] == "case"
        assert f"DIMENSIONS {ni} {nj} {nk}" in lines
        pts_at = lines.index("POINTS 8 double") + 1
        # the first structured index varies fastest
        first = [float(x) for x in lines[pts_at].split()]
        second = [float(x) for x in lines[pts_at + 1].split()]
        assert first == [coords[c, 0, 0, 0] for c in range(3)]
        assert second == [coords[c, 1, 0, 0] for c in range(3)]
        s_at = lines.index("LOOKUP_TABLE default") + 1
        got = [float(lines[s_at + n]) for n in range(8)]
        assert got == [0.0, 4.0, 2.0, 6.0, 1.0, 5.0, 3.0, 7.0]
        v_at = lines.index("VECTORS v double") + 1
        assert [float(x) for x in lines[v_at].split()] == [0.0, 10.0, 20.0]

    def test_unsupported_field_shape(self, tmp_path):
        coords = np.zeros((3, 2, 2, 2))
        with pytest.raises(StorageError):
            export_vtk(tmp_path / "o.vtk", coords, {"bad": np.zeros((2, 2))})
