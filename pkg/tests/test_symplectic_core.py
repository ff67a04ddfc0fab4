import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cocyclab.errors import FlagAlignmentError, InvalidInput
from cocyclab.symplectic_core import (
    TOL_SYMP,
    SplittingSpec,
    conorm,
    eigen_moduli,
    embed_planar_blocks,
    norm,
    random_orthogonal_symplectic,
    random_symplectic,
    rotation,
    standard_j,
    symplectic_orthogonal_adapt,
    symplectic_residual,
)

# mpmath (50 digits) singular values and eigenvalue moduli of FIXED_4
FIXED_4 = np.array([
    [2.0, 1.0, 0.0, 0.5],
    [0.5, 1.0, 0.3, 0.0],
    [0.1, 0.0, 0.7, 0.2],
    [0.0, 0.4, 0.0, 1.5],
])
FIXED_4_SV = [2.5476287979471706451, 1.4379673228895968392,
              0.78937801843683820807, 0.59893224172748538581]
FIXED_4_MODULI = [2.4400743532014261526, 1.3881307062738515796,
                  0.71508428373896123561, 0.71508428373896123561]

matrices = arrays(np.float64, (4, 4), elements=st.floats(-3, 3, allow_subnormal=False))


def power_iteration_norm(M, iters=500):
    v = np.ones(M.shape[1])
    for _ in range(iters):
        v = M.T @ (M @ v)
        v /= np.linalg.norm(v)
    return math.sqrt(np.linalg.norm(M.T @ (M @ v)))


class TestSplitting:
    def test_indices(self):
        s = SplittingSpec(1, 2, 3)
        assert (s.dim, s.k, s.ell) == (6, 1, 3)
        assert s.swapped() == SplittingSpec(3, 2, 1)

    def test_slices_skip_empty(self):
        assert list(SplittingSpec(0, 2, 2).slices()) == ["c", "s"]

    def test_rejects_negative(self):
        with pytest.raises(InvalidInput):
            SplittingSpec(-1, 1, 1)

    def test_require_nonzero(self):
        with pytest.raises(InvalidInput):
            SplittingSpec(0, 1, 1).require_nonzero()


class TestConorm:
    def test_identity(self):
        assert conorm(np.eye(5)) == 1.0

    def test_diagonal(self):
        assert conorm(np.diag([2.0, 0.5])) == 0.5

    def test_fixed_matrix_against_mpmath(self):
        assert conorm(FIXED_4) == pytest.approx(FIXED_4_SV[-1], rel=1e-13)
        assert norm(FIXED_4) == pytest.approx(FIXED_4_SV[0], rel=1e-13)

    def test_random_against_inverse_power_iteration(self, rng):
        M = rng.normal(size=(4, 4))
        oracle = 1.0 / power_iteration_norm(np.linalg.inv(M))
        assert conorm(M) == pytest.approx(oracle, rel=1e-8)

    def test_non_finite(self):
        with pytest.raises(InvalidInput):
            conorm([[1.0, np.nan], [0.0, 1.0]])

    @given(matrices)
    def test_times_inverse_norm_is_one(self, M):
        if np.linalg.cond(M) > 1e8:
            return
        assert conorm(M) * norm(np.linalg.inv(M)) == pytest.approx(1.0, rel=1e-8)

    @given(matrices, matrices)
    def test_sub_and_super_multiplicative(self, A, B):
        scale = max(1.0, norm(A) * norm(B))
        assert norm(A @ B) <= norm(A) * norm(B) + 1e-12 * scale
        assert conorm(A @ B) >= conorm(A) * conorm(B) - 1e-12 * scale


class TestSymplecticResidual:
    def test_j_is_symplectic(self):
        assert symplectic_residual(standard_j(1)) == 0.0

    def test_hyperbolic_2x2(self):
        assert symplectic_residual(np.diag([math.e, 1 / math.e])) == pytest.approx(0.0, abs=1e-15)

    def test_scaled_identity(self):
        # diag(2, 2)^T J diag(2, 2) - J = 3 J, whose Frobenius norm is 3 sqrt(2)
        assert symplectic_residual(np.diag([2.0, 2.0])) == pytest.approx(3 * math.sqrt(2))

    def test_odd_dimension(self):
        with pytest.raises(InvalidInput):
            symplectic_residual(np.eye(3))


class TestEigenModuli:
    def test_hyperbolic(self):
        assert np.allclose(eigen_moduli(np.diag([math.e, 1 / math.e])), [math.e, 1 / math.e])

    def test_rotation(self):
        assert np.allclose(eigen_moduli(rotation(0.3)), [1.0, 1.0])

    def test_companion_matrix(self):
        # t^2 - 3t + 2
        companion = np.array([[3.0, -2.0], [1.0, 0.0]])
        oracle = sorted(np.abs(np.roots([1, -3, 2])), reverse=True)
        assert np.allclose(eigen_moduli(companion), oracle)
        assert np.allclose(oracle, [2.0, 1.0])

    def test_fixed_matrix_against_mpmath(self):
        assert np.allclose(eigen_moduli(FIXED_4), FIXED_4_MODULI, rtol=1e-12)

    @given(st.integers(1, 3), st.floats(0.05, 2.0), st.integers(0, 10_000))
    def test_symplectic_pairing(self, n, spread, seed):
        rho = eigen_moduli(random_symplectic(n, spread, seed))
        assert np.allclose(rho * rho[::-1], 1.0, rtol=1e-6)


class TestRandomSymplectic:
    def test_zero_spread(self):
        assert np.array_equal(random_symplectic(1, 0.0, 3), np.eye(2))

    def test_unit_determinant(self):
        assert np.linalg.det(random_symplectic(1, 1.0, 42)) == pytest.approx(1.0, abs=1e-10)

    def test_residual(self):
        assert symplectic_residual(random_symplectic(2, 0.5, 7)) <= 1e-10

    def test_deterministic(self):
        assert np.array_equal(random_symplectic(3, 0.7, 5), random_symplectic(3, 0.7, 5))

    def test_norm_bound(self):
        for seed in range(20):
            assert norm(random_symplectic(2, 0.8, seed)) <= math.exp(0.8) + 1e-12


class TestAdapt:
    def test_coordinate_flag_gives_identity(self):
        C = symplectic_orthogonal_adapt(np.eye(4)[:, :2], 2)
        assert np.allclose(C, np.eye(4))

    def test_planar_q_axis_is_quarter_turn(self):
        C = symplectic_orthogonal_adapt(np.array([0.0, 1.0]), 1)
        # the orthogonal symplectic 2x2 matrices are exactly the rotations
        angle = math.atan2(C[1, 0], C[0, 0])
        assert abs(abs(angle) - math.pi / 2) < 1e-12
        assert np.allclose(np.abs(C @ [0.0, 1.0]), [1.0, 0.0])

    @given(st.integers(1, 3), st.integers(0, 10_000), st.data())
    def test_aligns_symplectic_image_of_coordinate_flag(self, n, seed, data):
        r = data.draw(st.integers(1, n))
        S = random_symplectic(n, 0.9, seed)
        V = S[:, :r]
        C = symplectic_orthogonal_adapt(V, n)
        assert np.allclose(C.T @ C, np.eye(2 * n), atol=1e-10)
        assert symplectic_residual(C) <= TOL_SYMP
        for i in range(1, r + 1):
            image = C @ V[:, :i]
            # nothing outside the first i p-coordinates
            assert np.max(np.abs(image[i:])) <= 1e-8 * np.max(np.abs(image))

    def test_non_isotropic_flag(self):
        with pytest.raises(FlagAlignmentError):
            symplectic_orthogonal_adapt(np.eye(2), 1)

    def test_rank_deficient(self):
        V = np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        with pytest.raises(FlagAlignmentError):
            symplectic_orthogonal_adapt(V, 2)


def test_random_orthogonal_symplectic(rng):
    U = random_orthogonal_symplectic(3, rng)
    assert np.allclose(U.T @ U, np.eye(6))
    assert symplectic_residual(U) <= TOL_SYMP


def test_embed_planar_blocks():
    M = embed_planar_blocks([rotation(0.4), np.diag([2.0, 0.5])])
    assert symplectic_residual(M) <= 1e-14
    assert M[1, 1] == 2.0 and M[3, 3] == 0.5 and M[0, 0] == pytest.approx(math.cos(0.4))
