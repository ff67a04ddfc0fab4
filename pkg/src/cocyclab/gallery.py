"""Named constructions: the non-bunched counterexample cocycle, product
models, and the block assembly of planar maps around an elliptic fixed point.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .classify import witness_build
from .cocycle import Cocycle, WindowRunner, iter_theta, theta
from .errors import HorizonTooShort, InvalidInput, StallDetected
from .symplectic_core import (
    as_matrix,
    conorm,
    norm,
    rotation,
    spectral_radius,
)

REMARK_A = np.diag([math.exp(-2.0), math.exp(-1.0)])
REMARK_B = np.diag([math.exp(-0.5), math.exp(-1.0)])
REMARK_C = np.diag([1.0, math.exp(0.75)])


def remark_symbol(j):
    """Stable-block symbol at index ``j``: runs A, B, AA, BB, AAAA, BBBB, ...

    Block ``k`` has length ``2^(k // 2)``; the A-run of generation ``m``
    starts at ``2^(m+1) - 2`` and the B-run at ``3 * 2^m - 2``.
    """
    if j < 0:
        raise InvalidInput("index must be nonnegative")
    m = ((j + 2) // 2).bit_length() - 1
    return "A" if j < 3 * 2**m - 2 else "B"


def remark_window(m):
    """The all-B window ``(j_m, n_m) = (3 * 2^m - 2, 2^m)``."""
    return 3 * 2**m - 2, 2**m


def remark_cocycle(horizon=None):
    """Split cocycle (d_u, d_c, d_s) = (0, 2, 2): constant center ``C``, stable A/B schedule."""
    if horizon is not None and horizon < 1:
        raise InvalidInput("horizon must be >= 1")
    stable = Cocycle.schedule(remark_symbol, {"A": REMARK_A, "B": REMARK_B},
                              horizon=horizon, symplectic=False, name="remark-stable")
    center = Cocycle.constant(REMARK_C, horizon=horizon, symplectic=False)
    return Cocycle.block_diagonal(c=center, s=stable, name="remark")


@dataclass
class CheckResult:
    passed: bool
    max_error: float = 0.0
    detail: dict = field(default_factory=dict)


@dataclass
class RemarkReport:
    horizon: int
    m_list: list
    checks: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())


def verify_remark(horizon, m_list, tol=1e-12):
    """Closed-form checks on the counterexample cocycle.

    (i) ``log Theta(0, n) = n/4`` and the stable log-norm is ``-n`` for every
    ``n <= horizon``; (ii) ``log Theta(j_m, n_m) = -n_m/4`` on the all-B
    windows; (iii) ``n_m > j_m / 10``; (iv) the greedy witness at
    ``tau = 1/4`` does not hold.
    """
    m_list = [int(m) for m in m_list]
    need = max((2 ** (m + 2) - 2 for m in m_list), default=0)
    if need > horizon:
        raise HorizonTooShort(f"m_list needs horizon >= {need}, got {horizon}")
    c = remark_cocycle(horizon)
    checks = {}

    err_theta = err_stable = err_cc = err_cn = 0.0
    run = WindowRunner(c, 0)
    for n in range(1, horizon + 1):
        run.step()
        err_theta = max(err_theta, abs(run.log_theta() - n / 4))
        err_stable = max(err_stable, abs(run.log_norm("s") + n))
        err_cc = max(err_cc, abs(run.log_conorm("c")))
        err_cn = max(err_cn, abs(run.log_norm("c") - 0.75 * n))
    checks["theta_origin"] = CheckResult(err_theta <= tol, err_theta)
    checks["stable_norm"] = CheckResult(err_stable <= tol, err_stable)
    checks["center_norms"] = CheckResult(max(err_cc, err_cn) <= tol, max(err_cc, err_cn))

    err = 0.0
    windows = {}
    for m in m_list:
        j, n = remark_window(m)
        lt = theta(c, j, n)
        windows[m] = {"j": j, "n": n, "log_theta": lt}
        err = max(err, abs(lt + n / 4))
    checks["theta_b_windows"] = CheckResult(err <= tol, err, windows)

    ratios = {m: remark_window(m)[1] / remark_window(m)[0] for m in m_list}
    checks["window_condition"] = CheckResult(all(r > 0.1 for r in ratios.values()), 0.0,
                                             {"n_over_j": ratios})

    try:
        verdict = witness_build(c, 0.25, horizon)
        outcome = verdict.result
    except StallDetected as exc:
        verdict = exc.verdict
        outcome = "stall"
    checks["witness_not_holding"] = CheckResult(
        outcome != "holds", 0.0,
        {"outcome": outcome, "liminf_estimate": verdict.liminf_estimate,
         "liminf_window": verdict.liminf_window},
    )
    return RemarkReport(horizon, m_list, checks)


def remark_theta_series(horizon, j=0):
    """``[(n, log Theta(j, n))]`` for ``n = 1..horizon - j``."""
    c = remark_cocycle(horizon)
    return list(iter_theta(c, j, horizon - j))


# ---------------------------------------------------------------------------
# product models


def _mats(x):
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return [as_matrix(x)]
    return [as_matrix(M) for M in x]


@dataclass
class ProductModelSpec:
    """Derivative data of ``F x G x H`` on ``P x Q x S``.

    Each field is a list of matrices sampled over its factor (a single matrix
    for a constant derivative).  ``DF`` samples are equally weighted and
    stand in for the volume average on ``P``; ``F_split``/``G_split`` are the
    ``(d_u, d_s)`` coordinate splittings of the Anosov factors.
    ``periodic_F`` is the derivative along the period-``k`` orbit of the
    point used for normal hyperbolicity (default: ``DF``).
    ``obstruction_F``/``obstruction_H`` are derivatives along periodic orbits
    ``p'`` of ``F`` and ``q`` of ``H`` for the spectral-radius obstruction
    (default: ``DF`` and ``DH``).
    """

    DF: list
    DG: list
    DH: list
    F_split: tuple
    G_split: tuple
    periodic_F: list = None
    obstruction_F: list = None
    obstruction_H: list = None
    name: str = None

    def __post_init__(self):
        self.DF = _mats(self.DF)
        self.DG = _mats(self.DG)
        self.DH = _mats(self.DH)
        self.periodic_F = _mats(self.periodic_F) if self.periodic_F is not None else list(self.DF)
        self.obstruction_F = (_mats(self.obstruction_F) if self.obstruction_F is not None
                              else list(self.DF))
        self.obstruction_H = (_mats(self.obstruction_H) if self.obstruction_H is not None
                              else list(self.DH))
        for label, mats, split in (("DF", self.DF + self.periodic_F + self.obstruction_F,
                                    self.F_split), ("DG", self.DG, self.G_split)):
            du, ds = split
            for M in mats:
                if M.shape != (du + ds, du + ds):
                    raise InvalidInput(f"{label} sample has shape {M.shape}, split {split}")
                if np.any(M[:du, du:]) or np.any(M[du:, :du]):
                    raise InvalidInput(f"{label} sample is not block diagonal for split {split}")

    def f_samples(self):
        return self.DF + self.periodic_F + self.obstruction_F


def _blocks(M, split):
    du = split[0]
    return M[:du, :du], M[du:, du:]


def _product(mats):
    out = np.eye(mats[0].shape[0])
    for M in mats:
        out = M @ out
    return out


@dataclass
class ConditionReport:
    """One chained inequality ``a < b <= c < d`` in log form."""

    holds: bool
    slacks: list
    strict: list
    values: list


NONSTRICT_TOL = 1e-12


def _chain(values, strict):
    slacks = [b - a for a, b in zip(values, values[1:])]
    # a non-strict link tolerates rounding in the log-norms (1 vs 1 + ulp)
    ok = all((s > 0) if st else (s >= -NONSTRICT_TOL) for s, st in zip(slacks, strict))
    return ConditionReport(ok, slacks, list(strict), list(values))


@dataclass
class ProductModelReport:
    conditions: dict
    obstruction: dict
    anosov_asserted: bool = True

    @property
    def conditions_hold(self):
        return all(c.holds for c in self.conditions.values())


def product_model_check(spec):
    """Evaluate the product-model inequalities on finite derivative data.

    The Anosov property of ``F`` and ``G`` is an input assertion.  Every
    other condition is a chain of log-quantities; in the three chains that
    compare against ``H`` the middle link is non-strict.  The obstruction compares
    ``rho(D_{p'} F^l | E^s)^{1/l}`` with ``rho(D_q H^m)^{-2/m}``.
    """
    fs = spec.f_samples()
    Fu = [_blocks(M, spec.F_split)[0] for M in fs]
    Fs = [_blocks(M, spec.F_split)[1] for M in fs]
    Gu = [_blocks(M, spec.G_split)[0] for M in spec.DG]
    Gs = [_blocks(M, spec.G_split)[1] for M in spec.DG]

    sup_H = max(math.log(norm(M)) for M in spec.DH)
    inf_mH = min(math.log(conorm(M)) for M in spec.DH)
    sup_Gs = max(math.log(norm(M)) for M in Gs)
    inf_mGs = min(math.log(conorm(M)) for M in Gs)
    sup_Gu = max(math.log(norm(M)) for M in Gu)
    inf_mGu = min(math.log(conorm(M)) for M in Gu)
    sup_Fs = max(math.log(norm(M)) for M in Fs)
    inf_mFu = min(math.log(conorm(M)) for M in Fu)
    avg_Fs = float(np.mean([math.log(norm(_blocks(M, spec.F_split)[1])) for M in spec.DF]))
    avg_mFu = float(np.mean([math.log(conorm(_blocks(M, spec.F_split)[0])) for M in spec.DF]))

    conditions = {
        "g_over_h_squared": _chain([sup_Gs, 2 * inf_mH, 2 * sup_H, inf_mGu],
                                   [True, False, True]),
        "f_over_h": _chain([sup_Fs, inf_mH, sup_H, inf_mFu], [True, False, True]),
        "f_mean_over_h_squared": _chain([avg_Fs, 2 * inf_mH, 2 * sup_H, avg_mFu],
                                        [True, False, True]),
    }
    k = len(spec.periodic_F)
    Pk = _product(spec.periodic_F)
    Pu, Ps = _blocks(Pk, spec.F_split)
    conditions["f_period_over_g"] = _chain(
        [math.log(norm(Ps)), k * inf_mGs, k * sup_Gu, math.log(conorm(Pu))],
        [True, True, True],
    )
    conditions["f_period_over_g"].values.append(k)

    ell = len(spec.obstruction_F)
    mH = len(spec.obstruction_H)
    _, Os = _blocks(_product(spec.obstruction_F), spec.F_split)
    lhs = math.log(spectral_radius(Os)) / ell
    rhs = -2.0 * math.log(spectral_radius(_product(spec.obstruction_H))) / mH
    obstruction = {"triggered": lhs > rhs, "slack": lhs - rhs,
                   "log_rho_F_stable": lhs, "log_rho_H_bound": rhs, "ell": ell, "m": mH}
    return ProductModelReport(conditions, obstruction)


def _hyperbolic(a):
    return np.diag([math.exp(a), math.exp(-a)])


def product_basic():
    """``DF`` with exponents +-2, ``DG`` with +-1, ``DH`` a rotation."""
    return ProductModelSpec(
        DF=[_hyperbolic(2.0)], DG=[_hyperbolic(1.0)], DH=[rotation(0.7)],
        F_split=(1, 1), G_split=(1, 1), name="product-basic",
    )


def product_obstructed():
    """Hyperbolic ``DH`` and a weakly contracting periodic orbit of ``F``.

    The volume sample of ``F`` contracts by ``e^-2``; the periodic orbit
    ``p'`` only by ``e^-0.6``, which beats ``rho(DH)^-2 = e^-0.8``.
    """
    return ProductModelSpec(
        DF=[_hyperbolic(2.0)], DG=[_hyperbolic(1.0)], DH=[_hyperbolic(0.4)],
        F_split=(1, 1), G_split=(1, 1),
        obstruction_F=[_hyperbolic(0.6)], name="product-obstructed",
    )


# ---------------------------------------------------------------------------
# block assembly of planar maps


@dataclass
class KatokBlock:
    """Planar map ``g_i = R(angle) o perturbation`` and its aligner ``A_i``.

    ``perturbation`` maps an ``(..., 2)`` array of disk points to the same
    shape; ``None`` is the identity.
    """

    angle: float
    aligner: np.ndarray = None
    perturbation: object = None

    def __post_init__(self):
        self.aligner = np.eye(2) if self.aligner is None else as_matrix(self.aligner)
        if self.aligner.shape != (2, 2) or abs(np.linalg.det(self.aligner)) < 1e-12:
            raise InvalidInput("aligner must be an invertible 2x2 matrix")

    def g(self, y):
        if self.perturbation is not None:
            y = self.perturbation(y)
        return y @ rotation(self.angle).T


def planar_form(N):
    """Symplectic form for coordinates ordered as ``(x_1, y_1, ..., x_N, y_N)``."""
    J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(N), J2)


@dataclass
class KatokDiagnostics:
    samples: np.ndarray
    values: np.ndarray
    linear_map: np.ndarray
    c0_distance: float
    max_symplectic_residual: float
    residuals: np.ndarray


def katok_assemble(blocks, epsilon, samples=64, radius=0.9, seed=0, h=1e-5):
    """Evaluate ``g(x) = sum_i eps A_i^{-1} g_i(eps^{-1} A_i x_i)`` on sample points.

    Coordinates are grouped in planes, ``x = (x_1, ..., x_N)`` with
    ``x_i in R^2``.  Samples are drawn (seeded) so that every
    ``eps^{-1} A_i x_i`` lies in the disk of the given radius.  Diagnostics:
    the C0 distance to the linear map ``L = diag(A_i^{-1} R_i A_i)`` and the
    symplectic residual of a central-difference Jacobian at every sample.
    """
    if not epsilon > 0:
        raise InvalidInput("epsilon must be positive")
    blocks = list(blocks)
    N = len(blocks)
    if N == 0:
        raise InvalidInput("at least one block is required")
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=(samples, N)))
    phi = rng.uniform(0, 2 * np.pi, size=(samples, N))
    disk = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    x = np.empty((samples, N, 2))
    for i, b in enumerate(blocks):
        x[:, i] = epsilon * disk[:, i] @ np.linalg.inv(b.aligner).T
    x = x.reshape(samples, 2 * N)

    def g(points):
        pts = points.reshape(-1, N, 2)
        out = np.empty_like(pts)
        for i, b in enumerate(blocks):
            y = pts[:, i] @ b.aligner.T / epsilon
            out[:, i] = epsilon * b.g(y) @ np.linalg.inv(b.aligner).T
        return out.reshape(points.shape)

    L = np.zeros((2 * N, 2 * N))
    for i, b in enumerate(blocks):
        Ai = b.aligner
        L[2 * i:2 * i + 2, 2 * i:2 * i + 2] = np.linalg.inv(Ai) @ rotation(b.angle) @ Ai

    values = g(x)
    dist = float(np.max(np.linalg.norm(values - x @ L.T, axis=1)))
    Jf = planar_form(N)
    res = np.empty(samples)
    eye = np.eye(2 * N)
    for s in range(samples):
        cols = [(g(x[s] + h * e) - g(x[s] - h * e)) / (2 * h) for e in eye]
        D = np.array(cols).T
        res[s] = np.linalg.norm(D.T @ Jf @ D - Jf)
    return KatokDiagnostics(x, values, L, dist, float(res.max()), res)


def katok_linear():
    """Two rigid rotations with a non-orthogonal aligner on the second plane."""
    return [KatokBlock(0.9), KatokBlock(2.1, aligner=np.array([[1.0, 0.5], [0.0, 1.0]]))]


GALLERY = {
    "remark": ("Non-bunched cocycle whose Theta(0, n) still grows like e^(n/4)",
               "stable A/B schedule, center bunching counterexample"),
    "product-basic": ("Product model F x G x H, rotation center, every chain holds",
                      "product model, chained norm conditions"),
    "product-obstructed": ("Product model whose periodic orbit blocks uniform center bunching",
                           "product model, spectral-radius obstruction"),
    "katok-linear": ("Block assembly of two planar rotations around an elliptic fixed point",
                     "planar block assembly, symplectic diagnostics"),
}


def list_gallery():
    """``[(id, description, topic)]`` sorted by id."""
    return [(key, desc, topic) for key, (desc, topic) in sorted(GALLERY.items())]
