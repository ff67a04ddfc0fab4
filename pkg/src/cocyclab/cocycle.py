"""Matrix cocycles over a one-sided orbit and their window products.

A cocycle is a sequence of invertible factors ``A_0, A_1, ...``; the window
product is ``A(j, n) = A_{j+n-1} ... A_j``.  When a coordinate splitting
``(d_u, d_c, d_s)`` is attached, every factor is block diagonal and all norms
are tracked per block, which is exact for the block-diagonal constructions
this package works with.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    InvalidInput,
    MissingSplitting,
    OutOfHorizon,
    OverflowGuard,
)
from .symplectic_core import (
    INVERTIBLE_TOL,
    SplittingSpec,
    as_matrix,
    conorm,
    is_symplectic,
    singular_values,
)

RESCALE_EVERY = 16
OVERFLOW_LOG = 700.0
_GUARD = 1e150


def _lcm(values):
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def _is_diagonal(M):
    return not np.any(M - np.diag(np.diag(M)))


class Cocycle:
    """An invertible matrix sequence, optionally split into u/c/s blocks.

    Use the classmethod constructors (:meth:`constant`, :meth:`periodic`,
    :meth:`explicit`, :meth:`schedule`, :meth:`block_diagonal`) rather than
    calling ``__init__`` directly.

    Attributes
    ----------
    dim : int
    splitting : SplittingSpec or None
    horizon : int or None
        Number of available factors; ``None`` means unbounded.
    period : int or None
        Set for constant and periodic sources; enables finite checks of
        quantifiers over all base points.
    symplectic : bool
        User flag; enables the exponent-symmetry diagnostics.
    """

    def __init__(self, block_fns, dim, *, splitting=None, horizon=None, period=None,
                 symplectic=False, name=None, diagonal_blocks=()):
        self._block_fns = dict(block_fns)
        self.dim = int(dim)
        self.splitting = splitting
        self.horizon = horizon
        self.period = period
        self.symplectic = bool(symplectic)
        self.name = name
        self._diagonal = frozenset(diagonal_blocks)
        if splitting is not None and splitting.dim != self.dim:
            raise InvalidInput(f"splitting {splitting} does not match dimension {self.dim}")

    # ---- constructors -------------------------------------------------

    @classmethod
    def _from_full(cls, factor_at, mats, *, splitting, horizon, period, symplectic, name):
        mats = [as_matrix(M, name="factor") for M in mats]
        if not mats:
            raise InvalidInput("a cocycle needs at least one factor")
        dim = mats[0].shape[0]
        for M in mats:
            if M.shape != (dim, dim):
                raise InvalidInput("all factors must share one shape")
            if conorm(M) <= INVERTIBLE_TOL:
                raise InvalidInput("cocycle factors must be invertible")
        if splitting is not None:
            splitting = _coerce_splitting(splitting)
            if splitting.dim != dim:
                raise InvalidInput(f"splitting {splitting} does not match dimension {dim}")
            sl = splitting.slices()
            for M in mats:
                off = M.copy()
                for s in sl.values():
                    off[s, s] = 0.0
                if np.any(off):
                    raise InvalidInput("factors must be block diagonal for the given splitting")
            block_fns = {b: (lambda j, s=s: factor_at(j)[s, s]) for b, s in sl.items()}
            diag = {b for b, s in sl.items() if all(_is_diagonal(M[s, s]) for M in mats)}
        else:
            block_fns = {"full": factor_at}
            diag = {"full"} if all(_is_diagonal(M) for M in mats) else set()
        if symplectic is None:
            symplectic = dim % 2 == 0 and all(is_symplectic(M) for M in mats)
        return cls(block_fns, dim, splitting=splitting, horizon=horizon, period=period,
                   symplectic=symplectic, name=name, diagonal_blocks=diag)

    @classmethod
    def constant(cls, M, splitting=None, *, horizon=None, symplectic=None, name=None):
        A = as_matrix(M).copy()
        A.setflags(write=False)
        return cls._from_full(lambda j: A, [A], splitting=splitting, horizon=horizon,
                              period=1, symplectic=symplectic, name=name)

    @classmethod
    def periodic(cls, mats, splitting=None, *, horizon=None, symplectic=None, name=None):
        seq = [as_matrix(M).copy() for M in mats]
        p = len(seq)
        return cls._from_full(lambda j: seq[j % p], seq, splitting=splitting, horizon=horizon,
                              period=p, symplectic=symplectic, name=name)

    @classmethod
    def explicit(cls, mats, splitting=None, *, symplectic=None, name=None):
        seq = [as_matrix(M).copy() for M in mats]
        return cls._from_full(lambda j: seq[j], seq, splitting=splitting, horizon=len(seq),
                              period=None, symplectic=symplectic, name=name)

    @classmethod
    def schedule(cls, rule, alphabet, splitting=None, *, horizon=None, period=None,
                 symplectic=None, name=None):
        """Factors ``alphabet[rule(j)]`` for a deterministic ``rule``."""
        table = {k: as_matrix(v).copy() for k, v in alphabet.items()}
        return cls._from_full(lambda j: table[rule(j)], list(table.values()),
                              splitting=splitting, horizon=horizon, period=period,
                              symplectic=symplectic, name=name)

    @classmethod
    def block_diagonal(cls, u=None, c=None, s=None, *, symplectic=False, name=None):
        """Assemble a split cocycle from unsplit sub-cocycles (``None`` = empty block).

        Plain matrices are accepted and promoted to constant cocycles.
        """
        parts = {}
        for b, sub in (("u", u), ("c", c), ("s", s)):
            if sub is None:
                continue
            if not isinstance(sub, Cocycle):
                sub = Cocycle.constant(sub, symplectic=False)
            if sub.splitting is not None:
                raise InvalidInput("block_diagonal expects unsplit sub-cocycles")
            parts[b] = sub
        if not parts:
            raise InvalidInput("at least one block is required")
        splitting = SplittingSpec(*(parts[b].dim if b in parts else 0 for b in "ucs"))
        horizons = [p.horizon for p in parts.values() if p.horizon is not None]
        periods = [p.period for p in parts.values()]
        period = _lcm(periods) if all(p is not None for p in periods) else None
        block_fns = {b: p._block_fns["full"] for b, p in parts.items()}
        diag = {b for b, p in parts.items() if "full" in p._diagonal}
        return cls(block_fns, splitting.dim, splitting=splitting,
                   horizon=min(horizons) if horizons else None, period=period,
                   symplectic=symplectic, name=name, diagonal_blocks=diag)

    # ---- access -------------------------------------------------------

    @property
    def blocks(self):
        """Block names in coordinate order (``('full',)`` when unsplit)."""
        return tuple(self._block_fns)

    def check_index(self, j):
        if j < 0 or (self.horizon is not None and j >= self.horizon):
            raise OutOfHorizon(f"factor index {j} outside horizon {self.horizon}")

    def block(self, j, name):
        self.check_index(j)
        return self._block_fns[name](j)

    def factor(self, j):
        self.check_index(j)
        if "full" in self._block_fns:
            return self._block_fns["full"](j)
        return scipy.linalg.block_diag(*(fn(j) for fn in self._block_fns.values()))

    def factors(self, j, n):
        return [self.factor(i) for i in range(j, j + n)]

    def is_block_diagonal(self, name):
        return name in self._diagonal

    def require_window(self, j, n):
        if j < 0 or n < 0:
            raise OutOfHorizon(f"invalid window (j={j}, n={n})")
        if self.horizon is not None and j + n > self.horizon:
            raise OutOfHorizon(f"window (j={j}, n={n}) exceeds horizon {self.horizon}")

    def sample_starts(self, length=0):
        """Start indices over which a universal quantifier is finite and exact.

        One full period for periodic sources, every admissible start for
        finite horizons.  ``None`` when neither applies.
        """
        if self.period is not None:
            return range(self.period)
        if self.horizon is not None:
            return range(max(0, self.horizon - length + 1))
        return None

    def with_splitting(self, splitting):
        """Re-split an unsplit cocycle with block-diagonal factors."""
        splitting = _coerce_splitting(splitting)
        if self.splitting is not None:
            raise InvalidInput("cocycle already carries a splitting")
        fn = self._block_fns["full"]
        sl = splitting.slices()

        def check(j, s, b):
            M = fn(j)
            off = M.copy()
            for t in sl.values():
                off[t, t] = 0.0
            if np.any(off):
                raise InvalidInput(f"factor {j} is not block diagonal for {splitting}")
            return M[s, s]

        blocks = {b: (lambda j, s=s, b=b: check(j, s, b)) for b, s in sl.items()}
        diag = set(sl) if "full" in self._diagonal else set()
        return Cocycle(blocks, self.dim, splitting=splitting, horizon=self.horizon,
                       period=self.period, symplectic=self.symplectic, name=self.name,
                       diagonal_blocks=diag)

    def reversed(self, horizon=None):
        """Backward cocycle: reverse the orbit, invert factors, swap u and s.

        Finite horizons reverse from the last factor; periodic sources use the
        backward orbit of the same base point, ``A'_j = A_{(-1-j) mod p}^{-1}``.
        """
        H = horizon if horizon is not None else self.horizon
        if H is None and self.period is None:
            raise InvalidInput("reversal needs a finite horizon or a period")
        if H is not None:
            def index(j):
                return H - 1 - j
        else:
            p = self.period

            def index(j):
                return (-1 - j) % p
        rename = {"u": "s", "s": "u", "c": "c", "full": "full"}
        fns = {}
        for b, fn in self._block_fns.items():
            fns[rename[b]] = (lambda j, fn=fn: np.linalg.inv(fn(index(j))))
        order = [b for b in ("full", "u", "c", "s") if b in fns]
        fns = {b: fns[b] for b in order}
        splitting = self.splitting.swapped() if self.splitting is not None else None
        diag = {rename[b] for b in self._diagonal}
        return Cocycle(fns, self.dim, splitting=splitting, horizon=H, period=self.period,
                       symplectic=self.symplectic,
                       name=f"{self.name}^-1" if self.name else None, diagonal_blocks=diag)

    def __repr__(self):
        return (f"Cocycle(name={self.name!r}, dim={self.dim}, splitting={self.splitting}, "
                f"horizon={self.horizon}, period={self.period})")


def _coerce_splitting(s):
    if s is None or isinstance(s, SplittingSpec):
        return s
    return SplittingSpec(*s)


class _Neumaier:
    """Compensated running sum of vectors."""

    def __init__(self, size):
        self.s = np.zeros(size)
        self.c = np.zeros(size)

    def add(self, x):
        t = self.s + x
        big = np.abs(self.s) >= np.abs(x)
        self.c += np.where(big, (self.s - t) + x, (x - t) + self.s)
        self.s = t

    @property
    def total(self):
        return self.s + self.c


class _BlockAccumulator:
    """Running product of one block with separately carried log scales.

    The forward product gives the norm, the running inverse product gives the
    conorm, both as top singular values of unit-scale matrices.  Rescaling
    happens every ``RESCALE_EVERY`` pushes or when entries leave a safe range.
    Diagonal blocks take an exact path on log-moduli.
    """

    def __init__(self, dim, diagonal):
        self.dim = dim
        self.diagonal = diagonal
        self.count = 0
        if diagonal:
            self.logs = _Neumaier(dim)
            self.signs = np.ones(dim)
        else:
            self.M = np.eye(dim)
            self.Minv = np.eye(dim)
            self.scale = 0.0
            self.scale_inv = 0.0

    def push(self, A):
        self.count += 1
        if self.diagonal:
            d = np.diag(A)
            self.logs.add(np.log(np.abs(d)))
            self.signs *= np.sign(d)
            return
        self.M = A @ self.M
        self.Minv = self.Minv @ np.linalg.inv(A)
        if self.count % RESCALE_EVERY == 0 or not (
            1 / _GUARD < np.abs(self.M).max() < _GUARD and np.abs(self.Minv).max() < _GUARD
        ):
            self._rescale()

    def _rescale(self):
        a = np.abs(self.M).max()
        b = np.abs(self.Minv).max()
        self.M /= a
        self.Minv /= b
        self.scale += math.log(a)
        self.scale_inv += math.log(b)

    def log_norm(self):
        if self.dim == 0:
            return 0.0
        if self.diagonal:
            return float(self.logs.total.max())
        return math.log(singular_values(self.M)[0]) + self.scale

    def log_conorm(self):
        if self.dim == 0:
            return 0.0
        if self.diagonal:
            return float(self.logs.total.min())
        return -(math.log(singular_values(self.Minv)[0]) + self.scale_inv)

    def value(self):
        if self.diagonal:
            return np.diag(self.signs * np.exp(self.logs.total))
        return self.M * math.exp(self.scale)


@dataclass
class WindowProduct:
    """``A(j, n)`` with per-block log norms and log conorms.

    ``value`` raises :class:`OverflowGuard` when some block log exceeds
    ``OVERFLOW_LOG`` in magnitude; the logs remain valid.
    """

    j: int
    n: int
    log_norm: dict
    log_conorm: dict
    overflow: bool = False
    _value: np.ndarray = field(default=None, repr=False)

    @property
    def value(self):
        if self.overflow:
            raise OverflowGuard(f"A({self.j}, {self.n}) is outside double range")
        return self._value

    @property
    def full_log_norm(self):
        return max(self.log_norm.values())

    @property
    def full_log_conorm(self):
        return min(self.log_conorm.values())


class WindowRunner:
    """Extends ``A(j, n)`` one factor at a time (``n`` grows by one per :meth:`step`)."""

    def __init__(self, cocycle, j):
        self.cocycle = cocycle
        self.j = j
        self.n = 0
        self._acc = {}
        sizes = cocycle.splitting.sizes() if cocycle.splitting else {"full": cocycle.dim}
        for b in cocycle.blocks:
            self._acc[b] = _BlockAccumulator(sizes[b], cocycle.is_block_diagonal(b))

    def step(self):
        idx = self.j + self.n
        self.cocycle.check_index(idx)
        for b, acc in self._acc.items():
            acc.push(self.cocycle.block(idx, b))
        self.n += 1

    def log_norm(self, b):
        return self._acc[b].log_norm()

    def log_conorm(self, b):
        return self._acc[b].log_conorm()

    def log_theta(self):
        c = self._acc
        return -c["s"].log_norm() + c["c"].log_conorm() - c["c"].log_norm()

    def snapshot(self, with_value=True):
        log_norm = {b: acc.log_norm() for b, acc in self._acc.items()}
        log_conorm = {b: acc.log_conorm() for b, acc in self._acc.items()}
        extremes = [abs(v) for v in (*log_norm.values(), *log_conorm.values())]
        overflow = bool(extremes) and max(extremes) > OVERFLOW_LOG
        value = None
        if with_value and not overflow:
            blocks = [acc.value() for acc in self._acc.values()]
            value = blocks[0] if len(blocks) == 1 else scipy.linalg.block_diag(*blocks)
        return WindowProduct(self.j, self.n, log_norm, log_conorm, overflow, value)


def window_product(c, j, n):
    """Window product ``A(j, n) = A_{j+n-1} ... A_j`` (identity for ``n = 0``)."""
    c.require_window(j, n)
    runner = WindowRunner(c, j)
    for _ in range(n):
        runner.step()
    return runner.snapshot()


def _require_theta_split(c):
    s = c.splitting
    if s is None or s.d_c == 0 or s.d_s == 0:
        raise MissingSplitting("theta needs a splitting with nonzero center and stable blocks")


def theta(c, j, n):
    """Log of the bunching functional over the window ``(j, n)``.

    ``log Theta = -log|A|E^s| + log m(A|E^c) - log|A|E^c|`` with ``A = A(j, n)``.
    """
    _require_theta_split(c)
    c.require_window(j, n)
    runner = WindowRunner(c, j)
    for _ in range(n):
        runner.step()
    return runner.log_theta()


def iter_theta(c, j, n_max):
    """Yield ``(n, log Theta(j, n))`` for ``n = 1..n_max`` incrementally."""
    _require_theta_split(c)
    c.require_window(j, n_max)
    runner = WindowRunner(c, j)
    for n in range(1, n_max + 1):
        runner.step()
        yield n, runner.log_theta()


@dataclass
class SupermultiplicativityCheck:
    holds: bool
    slack: float
    prefix_slacks: list


def theta_supermultiplicativity_check(c, partition, tol=1e-8):
    """Check ``log Theta(0, i_k) >= sum_r log Theta(i_r, i_{r+1} - i_r)`` for every prefix.

    The returned slack is the smallest left-minus-right difference.
    """
    idx = [int(i) for i in partition]
    if not idx or idx[0] != 0 or any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidInput("partition must start at 0 and increase strictly")
    _require_theta_split(c)
    c.require_window(0, idx[-1])
    # full-window values come from one running pass
    whole = {}
    targets = set(idx[1:])
    for n, lt in iter_theta(c, 0, idx[-1]):
        if n in targets:
            whole[n] = lt
    chained = 0.0
    slacks = []
    for a, b in zip(idx, idx[1:]):
        chained += theta(c, a, b - a)
        slacks.append(whole[b] - chained)
    slack = min(slacks) if slacks else 0.0
    return SupermultiplicativityCheck(slack >= -tol, slack, slacks)
