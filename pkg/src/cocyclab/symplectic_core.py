"""Dense linear-algebra primitives on small real matrices.

Conventions
-----------
Symplectic matrices act on ``R^{2n}`` with coordinates ``(p_1..p_n, q_1..q_n)``
and the standard form ``J = [[0, I], [-I, 0]]``, so that ``omega(p_i, q_i) = 1``.
All norms are operator 2-norms; the conorm is the smallest singular value.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FlagAlignmentError, InvalidInput, NumericalFailure

TOL_SYMP = 1e-9
TOL_EIG = 1e-6
TOL_ANGLE = 1e-8
INVERTIBLE_TOL = 1e-12


@dataclass(frozen=True)
class SplittingSpec:
    """Coordinate splitting ``R^d = E^u + E^c + E^s`` in that order."""

    d_u: int
    d_c: int
    d_s: int

    def __post_init__(self):
        for name in ("d_u", "d_c", "d_s"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise InvalidInput(f"{name} must be a nonnegative integer, got {value!r}")

    @property
    def dim(self):
        return self.d_u + self.d_c + self.d_s

    @property
    def k(self):
        return self.d_u

    @property
    def ell(self):
        return self.d_u + self.d_c

    def slices(self):
        """Map block name to coordinate slice, skipping empty blocks."""
        out = {}
        start = 0
        for name, size in (("u", self.d_u), ("c", self.d_c), ("s", self.d_s)):
            if size:
                out[name] = slice(start, start + size)
            start += size
        return out

    def sizes(self):
        return {"u": self.d_u, "c": self.d_c, "s": self.d_s}

    def require_nonzero(self):
        if not (self.d_u and self.d_c and self.d_s):
            raise InvalidInput(f"partially hyperbolic splitting needs nonzero blocks, got {self}")

    def swapped(self):
        return SplittingSpec(self.d_s, self.d_c, self.d_u)


def as_matrix(M, *, square=True, name="matrix"):
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} has non-finite entries")
    return A


def standard_j(n):
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def singular_values(M):
    A = as_matrix(M)
    try:
        return scipy.linalg.svdvals(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc


def norm(M):
    """Operator 2-norm."""
    s = singular_values(M)
    return float(s[0]) if s.size else 0.0


def conorm(M):
    """Smallest expansion ``min_{|v|=1} |Mv|``, i.e. the smallest singular value.

    Equals ``1 / ||M^{-1}||`` for invertible ``M``.

    >>> conorm([[2.0, 0.0], [0.0, 0.5]])
    0.5
    """
    s = singular_values(M)
    return float(s[-1]) if s.size else 1.0


def check_invertible(M, tol=INVERTIBLE_TOL, name="matrix"):
    A = as_matrix(M, name=name)
    if A.size and conorm(A) <= tol:
        raise InvalidInput(f"{name} is not invertible (smallest singular value <= {tol})")
    return A


def symplectic_residual(M):
    """Frobenius norm of ``M^T J M - J``; compare against :data:`TOL_SYMP`."""
    A = as_matrix(M)
    d = A.shape[0]
    if d % 2:
        raise InvalidInput(f"symplectic residual needs even dimension, got {d}")
    J = standard_j(d // 2)
    return float(np.linalg.norm(A.T @ J @ A - J, "fro"))


def is_symplectic(M, tol=TOL_SYMP):
    return symplectic_residual(M) <= tol


def eigen_moduli(M):
    """Moduli of all eigenvalues with algebraic multiplicity, descending."""
    A = as_matrix(M)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue solver failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise NumericalFailure("eigenvalue solver returned non-finite values")
    return np.sort(np.abs(ev))[::-1]


def spectral_radius(M):
    return float(eigen_moduli(M)[0])


def _orthonormal_complement(Q, dim):
    """Orthonormal basis of the orthogonal complement of ``span(Q)`` in ``R^dim``."""
    if Q.shape[1] == 0:
        return np.eye(dim)
    full, _ = np.linalg.qr(np.hstack([Q, np.eye(dim)]), mode="complete")
    # first columns reproduce span(Q); the rest complete it
    return full[:, Q.shape[1]:]


def symplectic_orthogonal_adapt(basis, n, tol=TOL_ANGLE):
    """Symplectic orthogonal ``C`` sending an isotropic flag onto coordinate p-spans.

    Parameters
    ----------
    basis : array_like, shape (2n, r) or sequence of 2n-vectors
        Ordered vectors ``v_1..v_r``; the flag is ``span(v_1..v_i)`` for each
        prefix.  The span of all of them must be isotropic (so ``r <= n``).
    n : int
        Half dimension.

    Returns
    -------
    C : ndarray, shape (2n, 2n)
        Orthogonal and symplectic, with ``C span(v_1..v_i) = span(p_1..p_i)``
        for every ``i``.

    Raises
    ------
    FlagAlignmentError
        When the vectors are rank deficient or their span is not isotropic.
    """
    d = 2 * n
    V = np.asarray(basis, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] != d and V.ndim == 2 and V.shape[1] == d:
        V = V.T
    if V.shape[0] != d:
        raise InvalidInput(f"basis vectors must have length {d}")
    r = V.shape[1]
    if r > n:
        raise FlagAlignmentError(f"an isotropic flag has dimension <= {n}, got {r}")
    J = standard_j(n)
    if r:
        Q, R = np.linalg.qr(V)
        diag = np.abs(np.diag(R))
        if diag.min() <= tol * max(1.0, diag.max()):
            raise FlagAlignmentError("flag basis is rank deficient")
        iso = np.linalg.norm(Q.T @ J @ Q)
        if iso > max(tol, 1e-6):
            raise FlagAlignmentError(f"flag is not isotropic (|Q^T J Q| = {iso:.3e})")
    else:
        Q = np.zeros((d, 0))
    # complete to an orthonormal Lagrangian basis u_1..u_n
    U = Q
    while U.shape[1] < n:
        comp = _orthonormal_complement(np.hstack([U, J @ U]), d)
        U = np.hstack([U, comp[:, :1]])
    W = np.hstack([U, -J @ U])
    C = W.T
    if np.linalg.norm(C.T @ C - np.eye(d)) > 1e-8 or symplectic_residual(C) > TOL_SYMP:
        raise FlagAlignmentError("alignment lost orthogonality; flag is ill-conditioned")
    return C


def random_symplectic(n, spread, seed):
    """Deterministic random symplectic ``exp(J S)`` with ``||J S||_2 = spread``.

    ``S`` is a random symmetric matrix, so ``J S`` is Hamiltonian and the
    exponential is symplectic with ``||M|| <= e^spread``.  Zero spread gives
    the identity.
    """
    if n < 1:
        raise InvalidInput("half dimension must be >= 1")
    if spread < 0:
        raise InvalidInput("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(2 * n, 2 * n))
    S = (G + G.T) / 2.0
    H = standard_j(n) @ S
    h = norm(H)
    if spread == 0 or h == 0:
        return np.eye(2 * n)
    return scipy.linalg.expm(H * (spread / h))


def random_orthogonal_symplectic(n, rng):
    """Haar-ish element of ``Sp(2n) ∩ O(2n)``, built from a random unitary."""
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U, R = np.linalg.qr(Z)
    U = U * (np.diag(R) / np.abs(np.diag(R)))
    X, Y = U.real, U.imag
    return np.block([[X, Y], [-Y, X]])


def embed_planar_blocks(blocks):
    """Direct sum of 2x2 blocks, block ``i`` acting on the ``(p_i, q_i)`` plane.

    Each block is symplectic in the plane iff its determinant is 1, so the
    result is symplectic exactly when every block has unit determinant.
    """
    mats = [as_matrix(B, name="planar block") for B in blocks]
    n = len(mats)
    out = np.zeros((2 * n, 2 * n))
    for i, B in enumerate(mats):
        if B.shape != (2, 2):
            raise InvalidInput("planar blocks must be 2x2")
        idx = [i, n + i]
        out[np.ix_(idx, idx)] = B
    return out


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])
