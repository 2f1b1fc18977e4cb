"""Transports, ring collectives, and the two-layer halo update."""

import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jetflow.exchange import (
    ExchangeError,
    ExchangeTimeout,
    HaloExchanger,
    SocketTransport,
    ThreadGroup,
    default_unix_endpoints,
    parse_endpoint,
    ring_allgather,
)
from jetflow.meshgen import GHOST
from jetflow.partition import PartitionSpec, build_topology


def run_ranks(size, fn):
    """Run fn(rank, transport) on one thread per rank over a ThreadGroup."""
    group = ThreadGroup(size, timeout=30.0)
    errors = []
    results = [None] * size

    def work(rank):
        try:
            results[rank] = fn(rank, group.transport(rank))
        except BaseException as exc:  # noqa: BLE001 - surfaced below
            errors.append((rank, exc))

    threads = [threading.Thread(target=work, args=(r,)) for r in range(size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0][1]
    return results


class TestThreadTransport:
    def test_roundtrip_including_noncontiguous(self):
        base = np.arange(2 * 5 * 4 * 6, dtype=np.float64).reshape(2, 5, 4, 6)
        view = base[:, 1:4, :, ::2]  # non-contiguous slice

        def fn(rank, tr):
            if rank == 0:
                tr.send(1, 0, view)
                tr.send(1, 1, np.array([3.0, 4.0]))
            else:
                got = tr.recv(0, 0, view.shape)
                np.testing.assert_array_equal(got, view)
                got1 = tr.recv(0, 1, (2,))
                np.testing.assert_array_equal(got1, [3.0, 4.0])
            return True

        assert all(run_ranks(2, fn))

    def test_tags_are_independent_mailboxes(self):
        def fn(rank, tr):
            if rank == 0:
                tr.send(1, 7, np.array([1.0]))
                tr.send(1, 8, np.array([2.0]))
            else:
                # receive in the opposite order of sending
                b = tr.recv(0, 8, (1,))
                a = tr.recv(0, 7, (1,))
                assert (a[0], b[0]) == (1.0, 2.0)
            return True

        assert all(run_ranks(2, fn))

    def test_shape_mismatch_raises(self):
        def fn(rank, tr):
            if rank == 0:
                tr.send(1, 0, np.zeros((3, 3)))
                return None
            with pytest.raises(ExchangeError, match="shape"):
                tr.recv(0, 0, (4, 3))
            return True

        run_ranks(2, fn)

    def test_sync_reduces_max_across_generations(self):
        def fn(rank, tr):
            first = tr.sync(rank + 1)
            second = tr.sync(10 - rank)
            third = tr.sync(0)
            return first, second, third

        for got in run_ranks(3, fn):
            assert got == (3, 10, 0)

    def test_recv_timeout(self):
        tr = ThreadGroup(2, timeout=0.05).transport(0)
        with pytest.raises(ExchangeTimeout):
            tr.recv(1, 0, (1,))

    def test_sync_timeout_when_peer_missing(self):
        tr = ThreadGroup(2, timeout=0.05).transport(0)
        with pytest.raises(ExchangeTimeout):
            tr.sync(1)

    @given(st.lists(st.integers(1, 5), min_size=1, max_size=4),
           st.integers(0, 2**32 - 1))
    def test_wire_roundtrip_any_shape(self, shape, seed):
        rng = np.random.default_rng(seed)
        arr = rng.normal(size=tuple(shape))

        def fn(rank, tr):
            if rank == 0:
                tr.send(1, 0, arr)
                return None
            return tr.recv(0, 0, arr.shape)

        got = run_ranks(2, fn)[1]
        np.testing.assert_array_equal(got, arr)


class TestEndpoints:
    def test_parse_unix_and_tcp(self):
        assert parse_endpoint("unix:/tmp/x.sock")[1] == "/tmp/x.sock"
        fam, addr = parse_endpoint("tcp:127.0.0.1:9000")
        assert addr == ("127.0.0.1", 9000)

    @pytest.mark.parametrize("bad", ["tcp:9000", "tcp:host:port", "mailto:x",
                                     "tcp::12a"])
    def test_malformed_endpoints_raise(self, bad):
        with pytest.raises(ExchangeError):
            parse_endpoint(bad)

    def test_default_unix_endpoints(self, tmp_path):
        eps = default_unix_endpoints(3, str(tmp_path))
        assert len(eps) == 3
        assert eps[1] == f"unix:{tmp_path}/worker-1.sock"


class TestSocketTransport:
    def test_roundtrip_and_sync_over_unix_sockets(self, tmp_path):
        size = 3
        endpoints = default_unix_endpoints(size, str(tmp_path))
        payload = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        errors = []
        maxes = [None] * size

        def work(rank):
            try:
                with SocketTransport(rank, endpoints, timeout=30.0) as tr:
                    nxt, prv = (rank + 1) % size, (rank - 1) % size
                    tr.send(nxt, 0, payload + rank)
                    got = tr.recv(prv, 0, payload.shape)
                    np.testing.assert_array_equal(got, payload + prv)
                    maxes[rank] = tr.sync(rank * 2)
                    tr.sync(0)
            except BaseException as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=work, args=(r,)) for r in range(size)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        assert maxes == [4, 4, 4]


class TestRingAllgather:
    def test_slot_order_is_global(self):
        size = 4

        def fn(rank, tr):
            payload = np.full((2, 3), float(rank))
            prv, nxt = (rank - 1) % size, (rank + 1) % size
            return ring_allgather(tr, prv, nxt, rank, size, payload)

        for out in run_ranks(size, fn):
            assert len(out) == size
            for slot, arr in enumerate(out):
                np.testing.assert_array_equal(arr, np.full((2, 3), float(slot)))

    def test_single_slot_is_identity(self):
        tr = ThreadGroup(1).transport(0)
        payload = np.array([1.0, 2.0])
        out = ring_allgather(tr, 0, 0, 0, 1, payload)
        assert len(out) == 1
        np.testing.assert_array_equal(out[0], payload)


def pattern(gi, j, gk):
    return float(gi) * 1000.0 + float(j) * 100.0 + float(gk)


def build_block_state(topo, rank, nvar=2, sentinel=-1.0):
    """Extended block filled with the global pattern on owned nodes."""
    blk = topo.block(rank)
    ni = blk.ni + 2 * GHOST
    nk = blk.nk + 2 * GHOST
    nj = topo.n_radial
    q = np.full((nvar, ni, nj, nk), sentinel)
    d = topo.n_az_distinct
    for ii in range(GHOST, ni - GHOST):
        gi = blk.ax_lo + ii - GHOST
        for j in range(nj):
            for kk in range(GHOST, nk - GHOST):
                gk = (blk.az_lo + kk - GHOST) % d
                for v in range(nvar):
                    q[v, ii, j, kk] = pattern(gi, j, gk) + v * 1e6
    return q


def expected_block_state(topo, rank, nvar=2, sentinel=-1.0):
    """Pattern everywhere reachable by the halo update."""
    blk = topo.block(rank)
    q = build_block_state(topo, rank, nvar, sentinel)
    ni = blk.ni + 2 * GHOST
    nk = blk.nk + 2 * GHOST
    d = topo.n_az_distinct
    for ii in range(ni):
        gi = blk.ax_lo + ii - GHOST
        interior_axial = GHOST <= ii < ni - GHOST
        if not interior_axial:
            if (ii < GHOST and blk.west is None) or \
               (ii >= ni - GHOST and blk.east is None):
                continue  # physical end: ghosts are left alone
        for j in range(topo.n_radial):
            for kk in range(nk):
                if interior_axial and GHOST <= kk < nk - GHOST:
                    continue
                gk = (blk.az_lo + kk - GHOST) % d
                for v in range(nvar):
                    q[v, ii, j, kk] = pattern(gi, j, gk) + v * 1e6
    return q


class TestHaloExchanger:
    @pytest.mark.parametrize("parts", [(1, 1), (2, 1), (1, 2), (2, 2)])
    def test_ghosts_match_wrapped_global_pattern(self, parts):
        topo = build_topology((16, 5, 13), PartitionSpec(*parts))
        states = [build_block_state(topo, r) for r in range(topo.workers)]

        def fn(rank, tr):
            HaloExchanger(topo, rank, tr).exchange(states[rank])
            return True

        assert all(run_ranks(topo.workers, fn))
        for rank in range(topo.workers):
            want = expected_block_state(topo, rank)
            np.testing.assert_array_equal(states[rank], want,
                                          err_msg=f"rank {rank} parts {parts}")

    def test_seam_block_ghosts_skip_duplicate_station(self):
        # the block owning the closing duplicate must serve its neighbors
        # the distinct stations, never the duplicate
        topo = build_topology((16, 5, 13), PartitionSpec(1, 2))
        seam = topo.workers - 1
        blk = topo.block(seam)
        assert blk.az_hi == 13  # owns the duplicate closing station
        states = [build_block_state(topo, r) for r in range(topo.workers)]

        def fn(rank, tr):
            HaloExchanger(topo, rank, tr).exchange(states[rank])
            return True

        run_ranks(topo.workers, fn)
        # first block's low ghosts wrap to distinct stations 10, 11
        q0 = states[0]
        blk0 = topo.block(0)
        for kk, gk in ((0, 10), (1, 11)):
            for ii in range(GHOST, blk0.ni + GHOST):
                gi = blk0.ax_lo + ii - GHOST
                assert q0[0, ii, 3, kk] == pattern(gi, 3, gk)
