"""Finite-horizon Lyapunov exponents, partial sums and Lyapunov filtrations.

Exponents are per-step rates in natural-log units.  All estimates are for a
finite horizon ``n``; an optional ``burn_in`` discards an initial stretch of
the orbit, which removes the ``O(1/n)`` transient bias of the estimators.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ClusterAmbiguity, InvalidInput, NotPeriodic, NumericalFailure
from .symplectic_core import TOL_ANGLE, as_matrix, singular_values

GAP_TOL = 1e-3
TOL_SYM_EXP = 1e-4


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    horizon: int
    method: str
    convergence: np.ndarray
    burn_in: int = 0
    symplectic_defect: float = None
    partial_sums: np.ndarray = field(init=False)

    def __post_init__(self):
        self.exponents = np.asarray(self.exponents, dtype=float)
        self.partial_sums = np.cumsum(self.exponents)

    @property
    def dim(self):
        return self.exponents.size

    def L(self, i):
        """``L_i = lambda_1 + ... + lambda_i`` (1-based; ``L_0 = 0``)."""
        return float(self.partial_sums[i - 1]) if i else 0.0


def _symmetry_defect(exps):
    return float(np.max(np.abs(exps + exps[::-1]))) if exps.size else 0.0


def _require_available(c, steps):
    if c.horizon is not None and steps > c.horizon:
        raise InvalidInput(f"need {steps} factors, cocycle horizon is {c.horizon}")


def lyapunov_qr(c, n, burn_in=0):
    """Exponents from QR re-orthonormalisation of the tangent frame.

    The frame starts at the identity and is re-orthonormalised after every
    factor; the first ``burn_in`` steps evolve the frame without
    accumulating.  Exponents are ``(1/n) sum log|R_ii|`` over the next ``n``
    steps, sorted descending.  ``convergence`` holds, per exponent, the
    oscillation (max - min) of the running estimate over the last quarter.
    """
    if n < 1:
        raise InvalidInput("horizon must be >= 1")
    _require_available(c, burn_in + n)
    d = c.dim
    Q = np.eye(d)
    sums = np.zeros(d)
    comp = np.zeros(d)
    lo = np.full(d, np.inf)
    hi = np.full(d, -np.inf)
    watch_from = n - max(1, n // 4)
    for k in range(burn_in + n):
        Q, R = np.linalg.qr(c.factor(k) @ Q)
        if k < burn_in:
            continue
        logs = np.log(np.abs(np.diag(R)))
        # compensated accumulation keeps long horizons exact to ~1 ulp
        y = logs - comp
        t = sums + y
        comp = (t - sums) - y
        sums = t
        t_done = k - burn_in + 1
        if t_done > watch_from:
            est = np.sort(sums / t_done)[::-1]
            lo = np.minimum(lo, est)
            hi = np.maximum(hi, est)
    exps = np.sort(sums / n)[::-1]
    defect = _symmetry_defect(exps) if c.symplectic else None
    return LyapunovReport(exps, n, "qr", hi - lo, burn_in, defect)


def compound_matrix(A, i):
    """``i``-th exterior power of ``A`` in the lexicographic basis of ``i``-subsets."""
    A = as_matrix(A, square=False)
    rows = list(itertools.combinations(range(A.shape[0]), i))
    cols = list(itertools.combinations(range(A.shape[1]), i))
    if i == 0:
        return np.ones((1, 1))
    r = np.array(rows)
    s = np.array(cols)
    sub = A[r[:, None, :, None], s[None, :, None, :]]
    return np.linalg.det(sub)


class _CompoundRunner:
    def __init__(self, c, i):
        self.c = c
        self.i = i
        self._cache = {}
        m = math.comb(c.dim, i)
        self.M = np.eye(m)
        self.scale = 0.0

    def _compound(self, A):
        key = id(A)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not A:
            hit = (A, compound_matrix(A, self.i))
            self._cache[key] = hit
        return hit[1]

    def step(self, k):
        self.M = self._compound(self.c.factor(k)) @ self.M
        a = np.abs(self.M).max()
        self.M /= a
        self.scale += math.log(a)

    def log_norm(self):
        return math.log(singular_values(self.M)[0]) + self.scale


def partial_sums_exterior(c, i, n, burn_in=0):
    """``L_i`` estimated from the norm growth of the ``i``-th exterior power.

    Returns ``(log|^i A(0, b+n)| - log|^i A(0, b)|) / n`` with ``b = burn_in``;
    for ``b = 0`` this is ``(1/n) log|^i A(0, n)|``.  Independent of the QR
    route: it multiplies compound matrices and reads a top singular value.
    """
    if not 1 <= i <= c.dim:
        raise InvalidInput(f"exterior index must lie in 1..{c.dim}")
    if n < 1:
        raise InvalidInput("horizon must be >= 1")
    _require_available(c, burn_in + n)
    run = _CompoundRunner(c, i)
    start = 0.0
    for k in range(burn_in + n):
        run.step(k)
        if k + 1 == burn_in:
            start = run.log_norm()
    return (run.log_norm() - start) / n


def lyapunov_exterior(c, n, burn_in=0):
    """Exponents as successive differences of exterior-power partial sums."""
    L = np.array([partial_sums_exterior(c, i, n, burn_in) for i in range(1, c.dim + 1)])
    exps = np.diff(np.concatenate([[0.0], L]))
    exps = np.sort(exps)[::-1]
    defect = _symmetry_defect(exps) if c.symplectic else None
    return LyapunovReport(exps, n, "exterior", np.zeros(c.dim), burn_in, defect)


def period_product_logs(c):
    """Per-step log eigenvalue moduli of one period product, descending."""
    if c.period is None:
        raise NotPeriodic("eigen_constant exponents need a constant or periodic cocycle")
    M = np.eye(c.dim)
    scale = 0.0
    for k in range(c.period):
        M = c.factor(k) @ M
        a = np.abs(M).max()
        M /= a
        scale += math.log(a)
    try:
        ev = np.abs(np.linalg.eigvals(M))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue solver failed: {exc}") from exc
    if np.any(ev == 0):
        raise NumericalFailure("period product underflowed; spread exceeds double range")
    return np.sort((np.log(ev) + scale) / c.period)[::-1], M, scale


def lyapunov_eigen(c):
    """Exact exponents of a constant or periodic cocycle from its period product."""
    exps, _, _ = period_product_logs(c)
    defect = _symmetry_defect(exps) if c.symplectic else None
    return LyapunovReport(exps, c.period, "eigen_constant", np.zeros(c.dim), 0, defect)


def cluster_values(values, gap_tol=GAP_TOL):
    """Group descending values into clusters separated by more than ``gap_tol``.

    Adjacent values closer than ``gap_tol`` are merged; a gap in
    ``(gap_tol, 2 gap_tol)`` cannot be classified and raises
    :class:`ClusterAmbiguity`.  Returns a list of index lists.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return []
    if np.any(np.diff(v) > 0):
        raise InvalidInput("values must be sorted descending")
    groups = [[0]]
    for k in range(1, v.size):
        gap = v[k - 1] - v[k]
        if gap <= gap_tol:
            groups[-1].append(k)
        elif gap < 2 * gap_tol:
            raise ClusterAmbiguity(
                f"exponent gap {gap:.3e} is between gap_tol and 2*gap_tol ({gap_tol:.1e})",
                gap=gap,
            )
        else:
            groups.append([k])
    return groups


@dataclass
class FiltrationEstimate:
    """Nested invariant subspaces ``F_1 < ... < F_t`` of a finite product.

    ``F_i`` is the sum of generalised eigenspaces whose per-step exponent is
    at least ``thresholds[i-1]``; ``basis[:, :dims[i-1]]`` is an orthonormal
    basis of ``F_i``.
    """

    thresholds: np.ndarray
    dims: list
    basis: np.ndarray
    n: int
    gap_tol: float
    exponents: np.ndarray
    invariance_residual: float

    @property
    def t(self):
        return len(self.dims)

    @property
    def subspaces(self):
        return [self.basis[:, :r] for r in self.dims]

    def multiplicities(self):
        return list(np.diff([0] + list(self.dims)))


def _ordered_schur(P, cutoffs):
    """Real Schur form whose leading blocks follow the given modulus cutoffs.

    ``cutoffs`` is a descending list of moduli separating consecutive
    clusters; returns ``(T, Z, sizes)`` with ``P = Z T Z^T``.
    """
    d = P.shape[0]
    try:
        T, Z = scipy.linalg.schur(P, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Schur decomposition failed: {exc}") from exc
    sizes = []
    k = 0
    for cut in cutoffs:
        T22 = T[k:, k:]
        try:
            Ts, Zs, sdim = scipy.linalg.schur(
                T22, output="real", sort=lambda x, y, cut=cut: math.hypot(x, y) > cut
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"Schur reordering failed: {exc}") from exc
        T[:k, k:] = T[:k, k:] @ Zs
        T[k:, k:] = Ts
        Z[:, k:] = Z[:, k:] @ Zs
        sizes.append(sdim)
        k += sdim
    sizes.append(d - k)
    return T, Z, sizes


def invariance_residual(P, Q):
    """Worst relative distance of ``P v`` from ``span(Q)`` over columns ``v`` of ``Q``."""
    if Q.shape[1] == 0:
        return 0.0
    PV = P @ Q
    out = PV - Q @ (Q.T @ PV)
    return float(np.max(np.linalg.norm(out, axis=0) / np.linalg.norm(PV, axis=0)))


def filtration_estimate(product, n=1, gap_tol=GAP_TOL):
    """Lyapunov filtration of a finite product ``P = A(0, n)``.

    Eigenvalue moduli ``mu`` give per-step exponents ``log|mu| / n``; these
    are clustered with :func:`cluster_values` and an ordered real Schur form
    delivers the nested invariant subspaces, fastest cluster first.
    """
    P = as_matrix(product)
    if n < 1:
        raise InvalidInput("n must be >= 1")
    try:
        ev = np.linalg.eigvals(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue solver failed: {exc}") from exc
    mod = np.abs(ev)
    if np.any(mod == 0):
        raise InvalidInput("product must be invertible")
    exps = np.sort(np.log(mod) / n)[::-1]
    groups = cluster_values(exps, gap_tol)
    thresholds = np.array([exps[g].mean() for g in groups])
    # split between the lowest member of one cluster and the top of the next
    cutoffs = [math.exp(n * 0.5 * (exps[a[-1]] + exps[b[0]])) for a, b in zip(groups, groups[1:])]
    _, Z, sizes = _ordered_schur(P, cutoffs)
    expected = [len(g) for g in groups]
    if sizes != expected:
        raise NumericalFailure(f"Schur reordering produced blocks {sizes}, expected {expected}")
    dims = list(np.cumsum(sizes).astype(int))
    res = max(invariance_residual(P, Z[:, :r]) for r in dims)
    if res > TOL_ANGLE:
        raise NumericalFailure(f"filtration invariance residual {res:.2e} exceeds {TOL_ANGLE}")
    return FiltrationEstimate(thresholds, dims, Z, n, gap_tol, exps, res)
