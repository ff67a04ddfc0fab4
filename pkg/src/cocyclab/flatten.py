"""Symplectic eigenvalue flattening of a finite product.

Given symplectic ``A_1..A_n`` and ``eps > 0``, build symplectic ``B_1..B_n``
with ``||B_i - I|| <= e^eps - 1`` such that ``A_n B_n ... A_1 B_1`` has all
of its in-band eigenvalues (per-step exponent ``|log|mu|| / n <= eps``) on
the unit circle, while the out-of-band spectrum is untouched.

The construction: take the Lyapunov filtration ``F_1 < ... < F_t`` of the
product, push it along the orbit (``F^k = A_k ... A_1 F``), align each pushed
isotropic flag with coordinate p-spans by a symplectic orthogonal ``C_k``, and
conjugate one diagonal symplectic scaling ``Lam`` that damps the in-band
positive levels by ``e^{-lam}`` on p and boosts their partners by ``e^{lam}``
on q.  Then ``B_{k+1} = C_k^T Lam C_k``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BandEdgeAmbiguity, CertificationFailure, InvalidInput, ParityViolation
from .spectral import GAP_TOL, FiltrationEstimate, filtration_estimate, invariance_residual
from .symplectic_core import (
    TOL_ANGLE,
    TOL_SYMP,
    as_matrix,
    eigen_moduli,
    norm,
    symplectic_orthogonal_adapt,
    symplectic_residual,
)

EXPONENT_TOL = 1e-5


@dataclass
class FlatteningInput:
    factors: list
    eps: float
    gap_tol: float = GAP_TOL

    def __post_init__(self):
        self.factors = [as_matrix(A, name="factor") for A in self.factors]
        if not self.factors:
            raise InvalidInput("at least one factor is required")
        d = self.factors[0].shape[0]
        if d % 2:
            raise InvalidInput("symplectic factors need even dimension")
        for A in self.factors:
            if A.shape != (d, d):
                raise InvalidInput("factors must share one shape")
            if symplectic_residual(A) > TOL_SYMP:
                raise InvalidInput("factor is not symplectic within tolerance")
        if not self.eps > 0:
            raise InvalidInput("eps must be positive")

    @property
    def n(self):
        return len(self.factors)

    @property
    def half_dim(self):
        return self.factors[0].shape[0] // 2


@dataclass
class FlatteningResult:
    perturbations: list
    d: int
    max_deviation: float
    circle_count: int
    circle_residual: float
    filtration: FiltrationEstimate
    aligners: list
    scaler: np.ndarray
    scaled_levels: list = field(default_factory=list)


def ordered_product(factors, perturbations=None):
    """``A_n B_n ... A_1 B_1`` (``B_i = I`` when ``perturbations`` is None)."""
    d = factors[0].shape[0]
    T = np.eye(d)
    for k, A in enumerate(factors):
        if perturbations is not None:
            T = perturbations[k] @ T
        T = A @ T
    return T


def per_step_exponents(product, n):
    return np.log(eigen_moduli(product)) / n


def count_in_band(product, n, eps):
    """Number ``2d`` of eigenvalues with ``|log|mu|| / n <= eps``.

    Moduli of a symplectic product pair up as ``(rho, 1/rho)``, so the count
    is even; an odd count signals a tolerance failure at the band edge.
    """
    exps = per_step_exponents(as_matrix(product), n)
    count = int(np.sum(np.abs(exps) <= eps))
    if count % 2:
        raise ParityViolation(f"odd in-band count {count}; an exponent sits on the band edge")
    return count


def _circle_stats(T, n, tol):
    exps = per_step_exponents(T, n)
    on = np.abs(exps) <= tol
    return int(on.sum()), float(np.abs(exps[on]).max() * n) if on.any() else 0.0


def flatten(inp, constant_shortcut=True):
    """Build the perturbations for a :class:`FlatteningInput`.

    Raises
    ------
    BandEdgeAmbiguity
        Some per-step exponent lies within ``gap_tol`` of ``+-eps``.
    ClusterAmbiguity, FlagAlignmentError
        Propagated from the filtration and alignment steps.
    """
    A = inp.factors
    n, N, eps, gap = inp.n, inp.half_dim, inp.eps, inp.gap_tol
    P = ordered_product(A)
    filt = filtration_estimate(P, n, gap)
    edge = np.abs(np.abs(filt.exponents) - eps)
    if np.any(edge < gap):
        raise BandEdgeAmbiguity(
            f"exponent within {edge.min():.2e} of the band edge eps={eps} (gap_tol {gap})"
        )
    two_d = count_in_band(P, n, eps)
    lam = filt.thresholds
    m = int(np.sum(lam > gap))
    u = int(np.sum(lam > eps))
    dims = [0] + filt.dims
    scaled = list(range(u + 1, m + 1))

    scaler = np.ones(2 * N)
    for i in scaled:
        block = slice(dims[i - 1], dims[i])
        scaler[block] = math.exp(-lam[i - 1])
        scaler[N + dims[i - 1]:N + dims[i]] = math.exp(lam[i - 1])
    Lam = np.diag(scaler)

    r_m = dims[m]
    Q = filt.basis[:, :r_m]
    same = constant_shortcut and all(np.array_equal(A[0], B) for B in A[1:])
    aligners = []
    for k in range(n):
        if k and same:
            aligners.append(aligners[0])
            continue
        aligners.append(symplectic_orthogonal_adapt(Q, N))
        Q, _ = np.linalg.qr(A[k] @ Q)

    if scaled:
        perturbations = [C.T @ Lam @ C for C in aligners]
    else:
        perturbations = [np.eye(2 * N) for _ in range(n)]
    max_dev = max(norm(B - np.eye(2 * N)) for B in perturbations)
    T = ordered_product(A, perturbations)
    count, resid = _circle_stats(T, n, gap)
    return FlatteningResult(
        perturbations, two_d // 2, max_dev, count, resid, filt, aligners, Lam,
        [float(lam[i - 1]) for i in scaled],
    )


@dataclass
class FlatteningCertificate:
    passed: bool
    in_band_count: int
    circle_count: int
    max_deviation: float
    deviation_bound: float
    max_symplectic_residual: float
    invariance_residual: float
    out_of_band_error: float
    circle_residual: float


def _out_of_band(exps, eps):
    return np.sort(exps[np.abs(exps) > eps])


def verify_flattening(inp, result, tol_exponent=EXPONENT_TOL):
    """Recompute everything a :class:`FlatteningResult` claims, from scratch.

    Returns a :class:`FlatteningCertificate` when every invariant holds and
    raises :class:`CertificationFailure` listing the violations otherwise.
    """
    A = inp.factors
    n, eps, gap = inp.n, inp.eps, inp.gap_tol
    Bs = [as_matrix(B, name="perturbation") for B in result.perturbations]
    if len(Bs) != n:
        raise InvalidInput(f"expected {n} perturbations, got {len(Bs)}")
    d = A[0].shape[0]
    if any(B.shape != (d, d) for B in Bs):
        raise InvalidInput("perturbation shapes do not match the factors")
    problems = []

    sym = max(symplectic_residual(B) for B in Bs)
    if sym > TOL_SYMP:
        problems.append(f"perturbation symplectic residual {sym:.2e} > {TOL_SYMP}")

    dev = max(norm(B - np.eye(d)) for B in Bs)
    bound = math.expm1(eps)
    if dev > bound + 1e-9:
        problems.append(f"deviation {dev:.6g} exceeds e^eps - 1 = {bound:.6g}")
    if result.max_deviation is not None and abs(dev - result.max_deviation) > 1e-12:
        problems.append(f"reported max_deviation {result.max_deviation} != recomputed {dev}")

    P = ordered_product(A)
    T = ordered_product(A, Bs)
    try:
        target = count_in_band(P, n, eps)
    except ParityViolation as exc:
        problems.append(str(exc))
        target = None
    count, resid = _circle_stats(T, n, gap)
    if target is not None and count != target:
        problems.append(f"{count} unit-circle eigenvalues, expected {target}")
    if result.circle_count is not None and count != result.circle_count:
        problems.append(f"reported circle_count {result.circle_count} != recomputed {count}")

    before = _out_of_band(per_step_exponents(P, n), eps)
    after = _out_of_band(per_step_exponents(T, n), eps)
    if before.size != after.size:
        oob = math.inf
        problems.append(f"out-of-band count changed from {before.size} to {after.size}")
    else:
        oob = float(np.max(np.abs(before - after))) if before.size else 0.0
        if oob > tol_exponent:
            problems.append(f"out-of-band exponents moved by {oob:.2e}")

    inv = 0.0
    if result.filtration is not None:
        filt = result.filtration
        for r in filt.dims:
            inv = max(inv, invariance_residual(T, filt.basis[:, :r]))
        if inv > TOL_ANGLE * max(1.0, norm(T) / max(min(eigen_moduli(T)), 1e-300)):
            problems.append(f"T does not preserve the filtration (residual {inv:.2e})")
    if result.aligners and result.scaled_levels:
        for k, (B, C) in enumerate(zip(Bs, result.aligners)):
            if np.max(np.abs(B - C.T @ result.scaler @ C)) > 1e-12:
                problems.append(f"B_{k + 1} is not C_{k}^T Lam C_{k}")
                break

    if problems:
        raise CertificationFailure("; ".join(problems), problems)
    return FlatteningCertificate(True, target, count, dev, bound, sym, inv, oob, resid)
