"""Decision procedures on cocycles: partial hyperbolicity, center bunching,
uniform bunching, ellipticity and domination.

Universal quantifiers over base points are only evaluated where they are
finite: one period of a periodic (or constant) cocycle, or every admissible
window of a finite horizon.  Anything else raises :class:`NotPeriodic`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import Cocycle, WindowRunner, iter_theta, theta, window_product
from .errors import (
    HorizonTooShort,
    InvalidInput,
    MissingSplitting,
    NotPeriodic,
    NumericalFailure,
    SplittingGapViolation,
    StallDetected,
    SymplecticMismatch,
)
from .spectral import GAP_TOL, TOL_SYM_EXP, _ordered_schur, cluster_values, period_product_logs
from .symplectic_core import TOL_EIG, SplittingSpec, eigen_moduli

RATIO_TOL = 0.05
LOG_HALF = math.log(0.5)


def _starts(c, length):
    starts = c.sample_starts(length)
    if starts is None:
        raise NotPeriodic("quantifier over base points needs a periodic or finite-horizon cocycle")
    if c.period is None and c.horizon is not None and c.horizon < length:
        raise HorizonTooShort(f"horizon {c.horizon} shorter than window length {length}")
    return starts


def _split(c, s):
    if s is not None and not isinstance(s, SplittingSpec):
        s = SplittingSpec(*s)
    if c.splitting is None:
        if s is None:
            raise MissingSplitting("a splitting is required")
        return c.with_splitting(s)
    if s is not None and s != c.splitting:
        raise InvalidInput(f"splitting {s} does not match the cocycle's {c.splitting}")
    return c


# ---------------------------------------------------------------------------
# partial hyperbolicity


@dataclass
class PHVerdict:
    holds: bool
    variant: str
    k: int
    margins: dict


def ph_check(c, s=None, k=1, variant="relative"):
    """Partial hyperbolicity of a coordinate splitting after ``k`` steps.

    ``relative`` checks, at every sampled base point ``x``,
    ``m(P|u) > 1 > |P|s|`` and ``m(P|u) > |P|c| >= m(P|c) > |P|s|`` with
    ``P = A(x, k)``.  ``absolute`` compares the same quantities across base
    points: ``m(P_x|u) > max(1, |P_y|c|)`` and ``min(1, m(P_y|c)) > |P_z|s|``.
    Margins are minimum log-slacks; the verdict holds iff all are positive.
    """
    if variant not in ("relative", "absolute"):
        raise InvalidInput(f"unknown variant {variant!r}")
    if k < 1:
        raise InvalidInput("k must be >= 1")
    c = _split(c, s)
    c.splitting.require_nonzero()
    rows = []
    for x in _starts(c, k):
        w = window_product(c, x, k)
        rows.append((w.log_conorm["u"], w.log_norm["c"], w.log_conorm["c"], w.log_norm["s"]))
    u_con, c_norm, c_con, s_norm = (np.array(col) for col in zip(*rows))
    if variant == "relative":
        margins = {
            "unstable_expands": float(u_con.min()),
            "stable_contracts": float((-s_norm).min()),
            "unstable_over_center": float((u_con - c_norm).min()),
            "center_over_stable": float((c_con - s_norm).min()),
        }
    else:
        margins = {
            "unstable_expands": float(u_con.min()),
            "unstable_over_center": float(u_con.min() - max(0.0, c_norm.max())),
            "stable_contracts": float(-s_norm.max()),
            "center_over_stable": float(min(0.0, c_con.min()) - s_norm.max()),
        }
    return PHVerdict(all(m > 0 for m in margins.values()), variant, k, margins)


# ---------------------------------------------------------------------------
# spectrum-level bunching


@dataclass
class SpectrumBunching:
    forward: bool
    backward: bool
    forward_slack: float
    backward_slack: float
    shortcut_slack: float = None


def spectrum_bunching_test(exponents, s, symplectic=False, tol=TOL_SYM_EXP):
    """Center-bunching conditions on a Lyapunov spectrum.

    With ``k = d_u`` and ``l = d_u + d_c`` (1-based exponents), forward
    bunching is ``lam_{k+1} - lam_l < -lam_{l+1}`` and backward bunching is
    ``lam_{k+1} - lam_l < lam_k``.  A direction whose outer block is empty is
    reported as ``None``.  For symplectic spectra the shortcut
    ``2 lam_{k+1} < lam_k`` must agree with both slacks within ``tol``.
    """
    if not isinstance(s, SplittingSpec):
        s = SplittingSpec(*s)
    lam = np.asarray(exponents, dtype=float)
    if lam.size != s.dim:
        raise InvalidInput(f"expected {s.dim} exponents, got {lam.size}")
    if s.d_c == 0:
        raise InvalidInput("center block must be nonempty")
    if np.any(np.diff(lam) > 0):
        raise InvalidInput("exponents must be sorted descending")
    k, l = s.k, s.ell
    if s.d_u and not lam[k - 1] > lam[k]:
        raise SplittingGapViolation(f"need lam_k > lam_(k+1), got {lam[k - 1]} <= {lam[k]}")
    if s.d_s and not lam[l - 1] > lam[l]:
        raise SplittingGapViolation(f"need lam_l > lam_(l+1), got {lam[l - 1]} <= {lam[l]}")
    spread = lam[k] - lam[l - 1]
    fwd = float(-lam[l] - spread) if s.d_s else None
    bwd = float(lam[k - 1] - spread) if s.d_u else None
    short = None
    if symplectic:
        if not s.d_u or s.d_u != s.d_s:
            raise InvalidInput("symplectic shortcut needs d_u = d_s > 0")
        short = float(lam[k - 1] - 2 * lam[k])
        for name, slack in (("forward", fwd), ("backward", bwd)):
            if abs(slack - short) > tol:
                raise SymplecticMismatch(
                    f"{name} slack {slack:.6g} disagrees with 2*lam_(k+1) < lam_k slack {short:.6g}"
                )
    return SpectrumBunching(
        None if fwd is None else fwd > 0,
        None if bwd is None else bwd > 0,
        fwd,
        bwd,
        short,
    )


# ---------------------------------------------------------------------------
# witness sequences


@dataclass
class BunchingVerdict:
    direction: str
    mode: str
    result: str
    tau: float = None
    horizon: int = None
    indices: list = field(default_factory=list)
    tail_ratio: float = None
    liminf_estimate: float = None
    liminf_window: tuple = None
    refutation: dict = None
    stall_at: int = None

    @property
    def theta_base(self):
        return math.exp(self.tau / 2) if self.tau is not None else None

    @property
    def holds(self):
        return self.result == "holds"


def _tail_ratio(indices):
    pairs = [(a, b) for a, b in zip(indices, indices[1:]) if a > 0]
    if not pairs:
        return math.inf
    q = max(1, len(pairs) // 4)
    return max(b / a for a, b in pairs[-q:])


def witness_build(c, tau, horizon, ratio_tol=RATIO_TOL, direction="forward"):
    """Greedy forward-bunching witness ``0 = i_0 < i_1 < ...``.

    ``i_{k+1}`` is the least ``i > i_k`` with
    ``log Theta(i_k, i - i_k) > (tau / 2)(i - i_k)``, i.e. ``theta = e^{tau/2}``.
    The verdict holds when the sequence runs to the horizon and the largest
    ratio ``i_{k+1}/i_k`` over the last quarter of pairs is at most
    ``1 + ratio_tol``; otherwise it is ``undecided_at_horizon``.  A leftover
    stretch shorter than ``ratio_tol * i_k`` counts as reaching the horizon.

    Every scanned window ``(j, n)`` with ``n > j/10`` feeds a liminf estimate
    of ``(1/n) log Theta(j, n)``; a nonpositive value is recorded as a
    refutation window.

    Raises
    ------
    StallDetected
        When no admissible ``i`` extends the sequence from some ``i_k``.  The
        exception carries the partial verdict (``result = "fails"``).
    """
    if not tau > 0:
        raise InvalidInput("tau must be positive")
    if horizon < 1:
        raise InvalidInput("horizon must be >= 1")
    if direction == "backward":
        c = c.reversed(horizon if c.horizon is not None else None)
    elif direction != "forward":
        raise InvalidInput(f"unknown direction {direction!r}")
    c.require_window(0, horizon)
    half = tau / 2
    indices = [0]
    worst = (math.inf, None, None)
    i = 0
    stalled = False
    while i < horizon:
        step = None
        for n, lt in iter_theta(c, i, horizon - i):
            if n > i / 10:
                rate = lt / n
                if rate < worst[0] or (rate == worst[0] and worst[1] is not None and i > worst[1]):
                    worst = (rate, i, n)
            if lt > half * n:
                step = n
                break
        if step is None:
            stalled = horizon - i >= max(1.0, ratio_tol * i)
            break
        i += step
        indices.append(i)

    verdict = BunchingVerdict(direction, "witness", "undecided_at_horizon", tau, horizon, indices)
    verdict.tail_ratio = _tail_ratio(indices)
    if worst[1] is not None:
        verdict.liminf_estimate = worst[0]
        verdict.liminf_window = (worst[1], worst[2])
        if worst[0] <= 0:
            verdict.refutation = {"j": worst[1], "n": worst[2], "rate": worst[0]}
    if stalled:
        verdict.result = "fails"
        verdict.stall_at = i
        raise StallDetected(
            f"no window from i_k = {i} beats theta^n before horizon {horizon}", verdict
        )
    if verdict.tail_ratio <= 1 + ratio_tol:
        verdict.result = "holds"
    return verdict


def verify_witness(c, verdict, tol=1e-9):
    """Recompute every consecutive ``Theta`` of a witness from scratch."""
    if verdict.direction == "backward":
        c = c.reversed(verdict.horizon if c.horizon is not None else None)
    half = verdict.tau / 2
    worst = math.inf
    for a, b in zip(verdict.indices, verdict.indices[1:]):
        worst = min(worst, theta(c, a, b - a) - half * (b - a))
    return worst >= -tol, worst


# ---------------------------------------------------------------------------
# uniform bunching


@dataclass
class UniformVerdict:
    uniform: bool
    m: int
    log_c: float
    m_max: int
    per_start: list


def uniform_bunching_check(c, theta_base, m_max, horizon=None):
    """Uniform bunching over one period of base points.

    Finds the least ``m <= m_max`` such that every start ``p`` has some
    ``1 <= i <= m`` with ``Theta_p(0, i) > theta_base``, then the constant
    ``log c = min_{p, n} (log Theta_p(0, n) - (n/m) log theta_base)`` over
    ``1 <= n <= horizon`` (default ``4 m * period``).
    """
    if c.period is None:
        raise NotPeriodic("uniform bunching is only decided for periodic or constant cocycles")
    if not theta_base > 1:
        raise InvalidInput("theta must exceed 1")
    if m_max < 1:
        raise InvalidInput("m_max must be >= 1")
    log_th = math.log(theta_base)
    per_start = []
    for p in range(c.period):
        hit = None
        for i, lt in iter_theta(c, p, m_max):
            if lt > log_th:
                hit = i
                break
        per_start.append(hit)
    if any(h is None for h in per_start):
        return UniformVerdict(False, None, None, m_max, per_start)
    m = max(per_start)
    N = horizon or 4 * m * c.period
    log_c = math.inf
    for p in range(c.period):
        for n, lt in iter_theta(c, p, N):
            log_c = min(log_c, lt - n / m * log_th)
    return UniformVerdict(True, m, log_c, m_max, per_start)


# ---------------------------------------------------------------------------
# ellipticity


@dataclass
class EllipticityVerdict:
    elliptic: bool
    max_rate: float


def ellipticity_check(period_product, p, eps):
    """Whether every eigenvalue modulus ``rho`` obeys ``|log rho| <= eps p``.

    ``max_rate`` is ``max |log rho| / p``.
    """
    if p < 1:
        raise InvalidInput("period must be >= 1")
    logs = np.abs(np.log(eigen_moduli(period_product)))
    return EllipticityVerdict(bool(np.all(logs <= eps * p + TOL_EIG)), float(logs.max() / p))


# ---------------------------------------------------------------------------
# domination


@dataclass
class DominationReport:
    index: int
    m: int
    margin: float
    dominated: bool
    m_max: int
    margins: list

    @property
    def ratio(self):
        return math.exp(self.margin) if self.margin is not None else None


def domination_search(c, index, m_max):
    """Least ``m`` with ``|A^m|F| / m(A^m|E) <= 1/2`` at every sampled base point.

    ``E`` is spanned by the first ``index`` coordinates and ``F`` by the rest;
    factors must be block diagonal for that split.  ``margins[m-1]`` is the
    worst ``log|A^m|F| - log m(A^m|E)`` over base points.
    """
    d = c.dim
    if not 0 < index < d:
        raise InvalidInput(f"index must lie in 1..{d - 1}")
    two = SplittingSpec(index, 0, d - index)
    if c.splitting is None:
        c = c.with_splitting(two)
    elif c.splitting != two:
        raise InvalidInput(f"cocycle splitting {c.splitting} is not the two-block split {two}")
    if c.period is None and c.horizon is not None and c.horizon < m_max:
        raise HorizonTooShort(f"horizon {c.horizon} < m_max {m_max}")
    margins = [-math.inf] * m_max
    for x in _starts(c, m_max):
        run = WindowRunner(c, x)
        for m in range(m_max):
            run.step()
            margins[m] = max(margins[m], run.log_norm("s") - run.log_conorm("u"))
    for m, g in enumerate(margins, start=1):
        if g <= LOG_HALF + 1e-10:
            return DominationReport(index, m, g, True, m_max, margins)
    return DominationReport(index, None, min(margins), False, m_max, margins)


def _orth(M):
    Q, _ = np.linalg.qr(M)
    return Q


def adapted_two_block(c, index, cutoff_log):
    """Periodic two-block cocycle expressing ``c`` in its own invariant splitting.

    ``E`` is the invariant subspace of the period product for per-step
    exponents above ``cutoff_log``, ``F`` the one below.  Each is carried
    along the period with orthonormal bases, so restricted norms are those of
    the original metric.
    """
    exps, M, scale = period_product_logs(c)
    p, d = c.period, c.dim
    cut = math.exp(p * cutoff_log - scale)
    _, Zt, st = _ordered_schur(M.copy(), [cut])
    Minv = np.linalg.inv(M)
    _, Zb, sb = _ordered_schur(Minv, [1.0 / cut])
    if st[0] != index or sb[0] != d - index:
        raise NumericalFailure(
            f"period product splits as {st[0]}+{sb[0]}, expected {index}+{d - index}"
        )
    E = [Zt[:, :index]]
    F = [Zb[:, : d - index]]
    for j in range(p - 1):
        A = c.factor(j)
        E.append(_orth(A @ E[-1]))
        F.append(_orth(A @ F[-1]))
    blocks = []
    for j in range(p):
        A = c.factor(j)
        nxt = (j + 1) % p
        blocks.append(np.block([
            [E[nxt].T @ A @ E[j], np.zeros((index, d - index))],
            [np.zeros((d - index, index)), F[nxt].T @ A @ F[j]],
        ]))
    return Cocycle.periodic(blocks, SplittingSpec(index, 0, d - index), symplectic=False)


@dataclass
class TrivialOrDominated:
    kind: str
    clusters: list
    gaps: list


def trivial_or_dominated_check(report, c, m_max, gap_tol=GAP_TOL):
    """Which alternative of the trivial-or-dominated dichotomy the data shows.

    ``kind`` is ``"trivial"`` (one exponent cluster), ``"dominated"`` (every
    cluster gap passes :func:`domination_search` in the adapted splitting) or
    ``"neither"`` (a discontinuity candidate for the partial sums ``L_i``).
    """
    if c.period is None:
        raise NotPeriodic("trivial/dominated check needs a constant or periodic cocycle")
    exps = np.asarray(report.exponents, dtype=float)
    groups = cluster_values(exps, gap_tol)
    if len(groups) == 1:
        return TrivialOrDominated("trivial", groups, [])
    gaps = []
    for a, b in zip(groups, groups[1:]):
        index = a[-1] + 1
        cutoff = 0.5 * (exps[a[-1]] + exps[b[0]])
        adapted = adapted_two_block(c, index, cutoff)
        gaps.append(domination_search(adapted, index, m_max))
    kind = "dominated" if all(g.dominated for g in gaps) else "neither"
    return TrivialOrDominated(kind, groups, gaps)
