import math
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocyclab.cocycle import (
    Cocycle,
    WindowRunner,
    iter_theta,
    theta,
    theta_supermultiplicativity_check,
    window_product,
)
from cocyclab.errors import InvalidInput, MissingSplitting, OutOfHorizon, OverflowGuard
from cocyclab.gallery import remark_cocycle
from cocyclab.symplectic_core import SplittingSpec, conorm, norm, rotation

# three block-diagonal factors for the splitting (1, 2, 1); mpmath (50 digits)
# values of the window (0, 3)
EXPLICIT_SPLIT = [
    [[1.5, 0, 0, 0], [0, 1.2, 0.4, 0], [0, -0.3, 0.9, 0], [0, 0, 0, 0.6]],
    [[2.0, 0, 0, 0], [0, 0.8, 0.1, 0], [0, 0.5, 1.1, 0], [0, 0, 0, 0.5]],
    [[1.1, 0, 0, 0], [0, 1.0, -0.7, 0], [0, 0.2, 0.6, 0], [0, 0, 0, 0.7]],
]
ORACLE_CENTER_LOG_NORM = -0.098416291156306182182
ORACLE_CENTER_LOG_CONORM = -0.20669682302515415006
ORACLE_STABLE_LOG_NORM = -1.560647748264668472
ORACLE_LOG_THETA = 1.4523672163958205041


def random_split_cocycle(seed, length=16, s=(1, 2, 2)):
    rng = np.random.default_rng(seed)
    sizes = [b for b in s if b]
    mats = []
    for _ in range(length):
        blocks = [rng.normal(size=(b, b)) + 2 * np.eye(b) for b in sizes]
        mats.append(np.block([
            [blocks[i] if i == k else np.zeros((sizes[i], sizes[k])) for k in range(len(sizes))]
            for i in range(len(sizes))
        ]))
    return Cocycle.explicit(mats, SplittingSpec(*s))


def direct_block_logs(c, j, n):
    P = np.eye(c.dim)
    for k in range(j, j + n):
        P = c.factor(k) @ P
    out = {}
    for b, sl in c.splitting.slices().items():
        out[b] = (math.log(norm(P[sl, sl])), math.log(conorm(P[sl, sl])))
    return out


class TestConstruction:
    def test_rejects_singular(self):
        with pytest.raises(InvalidInput):
            Cocycle.constant(np.diag([1.0, 0.0]))

    def test_rejects_non_block_diagonal(self):
        with pytest.raises(InvalidInput):
            Cocycle.constant(np.ones((2, 2)) + np.eye(2), SplittingSpec(1, 0, 1))

    def test_symplectic_autodetect(self):
        assert Cocycle.constant(rotation(0.2)).symplectic
        assert not Cocycle.constant(np.diag([2.0, 2.0])).symplectic

    def test_block_diagonal_period_is_lcm(self):
        c = Cocycle.block_diagonal(
            u=Cocycle.periodic([np.eye(1) * 2, np.eye(1) * 3]),
            c=Cocycle.periodic([np.eye(1)] * 3),
            s=np.eye(1) * 0.5,
        )
        assert c.period == 6
        assert c.splitting == SplittingSpec(1, 1, 1)

    def test_horizon(self):
        c = Cocycle.explicit([np.eye(2)] * 3)
        with pytest.raises(OutOfHorizon):
            c.factor(3)
        with pytest.raises(OutOfHorizon):
            window_product(c, 1, 3)

    def test_schedule(self):
        c = Cocycle.schedule(lambda j: "ab"[j % 2], {"a": [[2.0]], "b": [[3.0]]}, period=2)
        assert [c.factor(j)[0, 0] for j in range(4)] == [2.0, 3.0, 2.0, 3.0]


class TestWindowProduct:
    def test_constant_diagonal(self):
        c = Cocycle.constant(np.diag([math.e, 1 / math.e]))
        w = window_product(c, 0, 10)
        assert np.allclose(w.value, np.diag([math.e ** 10, math.e ** -10]), rtol=1e-13)
        assert w.log_norm["full"] == pytest.approx(10.0, abs=1e-13)

    def test_empty_window(self):
        c = random_split_cocycle(0)
        w = window_product(c, 4, 0)
        assert np.array_equal(w.value, np.eye(5))
        assert all(v == 0 for v in w.log_norm.values())

    def test_remark_stable_block(self):
        w = window_product(remark_cocycle(30), 0, 30)
        assert w.log_norm["s"] == pytest.approx(-30.0, abs=1e-12)

    def test_against_mpmath(self):
        c = Cocycle.explicit(EXPLICIT_SPLIT, SplittingSpec(1, 2, 1))
        w = window_product(c, 0, 3)
        assert w.log_norm["c"] == pytest.approx(ORACLE_CENTER_LOG_NORM, abs=1e-14)
        assert w.log_conorm["c"] == pytest.approx(ORACLE_CENTER_LOG_CONORM, abs=1e-14)
        assert w.log_norm["s"] == pytest.approx(ORACLE_STABLE_LOG_NORM, abs=1e-14)
        assert theta(c, 0, 3) == pytest.approx(ORACLE_LOG_THETA, abs=1e-13)

    def test_overflow_guard_keeps_logs(self):
        c = Cocycle.constant(np.diag([math.e, 1 / math.e]))
        w = window_product(c, 0, 800)
        assert w.overflow
        assert w.log_norm["full"] == pytest.approx(800.0, rel=1e-13)
        with pytest.raises(OverflowGuard):
            w.value

    def test_long_product_is_stable(self):
        # non-normal factor: naive products overflow long before n = 2000
        A = np.array([[1.5, 3.0], [0.0, 0.9]])
        c = Cocycle.constant(A)
        w = window_product(c, 0, 2000)
        assert w.log_norm["full"] / 2000 == pytest.approx(math.log(1.5), abs=1e-3)
        assert w.log_conorm["full"] / 2000 == pytest.approx(math.log(0.9), abs=1e-3)

    @given(st.integers(0, 1000), st.integers(0, 6), st.integers(1, 5), st.integers(1, 5))
    def test_cocycle_identity(self, seed, j, m, n):
        c = random_split_cocycle(seed)
        whole = window_product(c, j, m + n)
        first = window_product(c, j, m).value
        second = window_product(c, j + m, n).value
        P = second @ first
        for b, sl in c.splitting.slices().items():
            assert whole.log_norm[b] == pytest.approx(math.log(norm(P[sl, sl])), rel=1e-8, abs=1e-12)
            assert whole.log_conorm[b] == pytest.approx(math.log(conorm(P[sl, sl])), rel=1e-8,
                                                        abs=1e-12)

    @given(st.integers(0, 1000), st.integers(1, 15))
    def test_blocks_match_assembled_product(self, seed, n):
        c = random_split_cocycle(seed)
        direct = direct_block_logs(c, 0, n)
        lt = -direct["s"][0] + direct["c"][1] - direct["c"][0]
        assert theta(c, 0, n) == pytest.approx(lt, abs=1e-10)


class TestTheta:
    def test_identity(self):
        c = Cocycle.constant(np.eye(3), SplittingSpec(1, 1, 1))
        assert theta(c, 0, 7) == 0.0

    def test_needs_center_and_stable(self):
        with pytest.raises(MissingSplitting):
            theta(Cocycle.constant(np.eye(2)), 0, 1)

    def test_remark_b_window(self):
        assert theta(remark_cocycle(130), 94, 32) == pytest.approx(-8.0, abs=1e-12)

    def test_remark_origin(self):
        for n, lt in iter_theta(remark_cocycle(200), 0, 200):
            assert lt == pytest.approx(n / 4, abs=1e-12)

    def test_iter_matches_pointwise(self):
        c = random_split_cocycle(3)
        series = dict(iter_theta(c, 2, 10))
        for n in (1, 4, 10):
            assert series[n] == theta(c, 2, n)

    @given(st.integers(0, 1000), st.integers(0, 5), st.integers(1, 5), st.integers(1, 5))
    def test_supermultiplicative(self, seed, j, m, n):
        c = random_split_cocycle(seed)
        assert theta(c, j, m + n) >= theta(c, j, m) + theta(c, j + m, n) - 1e-8


class TestSupermultiplicativityCheck:
    def test_diagonal_blocks_give_equality(self):
        c = Cocycle.constant(np.diag([2.0, 1.1, 0.4]), SplittingSpec(1, 1, 1))
        r = theta_supermultiplicativity_check(c, [0, 2, 5, 9])
        assert r.holds and abs(r.slack) <= 1e-12

    def test_random_split(self):
        r = theta_supermultiplicativity_check(random_split_cocycle(11), [0, 3, 7, 12])
        assert r.holds and r.slack >= -1e-8

    def test_remark_dyadic(self):
        r = theta_supermultiplicativity_check(remark_cocycle(64), [0, 1, 2, 4, 8, 16, 32, 64])
        assert r.holds and r.slack >= -1e-12

    def test_bad_partition(self):
        with pytest.raises(InvalidInput):
            theta_supermultiplicativity_check(random_split_cocycle(1), [0, 3, 3])


class TestReversal:
    def test_inverts_and_swaps(self):
        c = random_split_cocycle(5, length=6, s=(1, 1, 2))
        r = c.reversed()
        assert r.splitting == SplittingSpec(2, 1, 1)
        assert np.allclose(r.block(0, "u"), np.linalg.inv(c.block(5, "s")))
        assert np.allclose(r.block(5, "s"), np.linalg.inv(c.block(0, "u")))

    def test_periodic_backward_orbit(self):
        mats = [np.diag([2.0, 1.0]), np.diag([3.0, 1.0])]
        r = Cocycle.periodic(mats).reversed()
        assert np.allclose(r.factor(0), np.linalg.inv(mats[1]))
        assert np.allclose(r.factor(1), np.linalg.inv(mats[0]))

    def test_involution(self):
        c = random_split_cocycle(9, length=5)
        rr = c.reversed().reversed()
        for j in range(5):
            assert np.allclose(rr.factor(j), c.factor(j))


def test_concurrent_calls_agree():
    c = remark_cocycle(512)
    expected = [theta(c, j, 64) for j in range(0, 400, 40)]
    results = {}

    def work(k):
        results[k] = [theta(c, j, 64) for j in range(0, 400, 40)]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results.values())


def test_runner_snapshot_matches_window_product():
    c = random_split_cocycle(2)
    run = WindowRunner(c, 3)
    for _ in range(6):
        run.step()
    snap = run.snapshot()
    w = window_product(c, 3, 6)
    assert snap.log_norm == w.log_norm and np.array_equal(snap.value, w.value)
