"""Execute scenario analyses and assemble a serialisable report.

Each analysis returns ``(verdicts, results, series)``: verdicts are the keys
an ``expect`` block may assert, results are the numbers behind them, and
series is optional plot data ``(columns, rows)``.  Analyses are independent
and may run on a thread pool; outputs are gathered in scenario order.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import gallery
from .classify import (
    domination_search,
    ellipticity_check,
    ph_check,
    spectrum_bunching_test,
    uniform_bunching_check,
    witness_build,
)
from .cocycle import iter_theta
from .errors import InvalidInput, StallDetected
from .flatten import FlatteningInput, flatten, verify_flattening
from .spectral import lyapunov_eigen, lyapunov_exterior, lyapunov_qr

DEFAULT_SERIES_HORIZON = 200
DEFAULT_LYAPUNOV_HORIZON = 2000
KATOK_RESIDUAL_TOL = 1e-6

VERDICT_KEYS = {
    "theta_series": (),
    "ph_check": ("partially_hyperbolic",),
    "lyapunov": (),
    "spectrum_bunching": ("spectrum_forward_bunched", "spectrum_backward_bunched"),
    "witness": ("forward_bunched", "backward_bunched", "witness_result"),
    "uniform_bunching": ("uniformly_bunched",),
    "ellipticity": ("elliptic",),
    "domination": ("dominated", "domination_m"),
    "remark_verify": ("remark_verified",),
    "product_model": ("product_conditions_hold", "obstruction_triggered"),
    "katok": ("katok_symplectic",),
    "flatten": ("flattening_certified",),
}


def to_plain(x):
    """Convert numpy scalars/arrays and tuples to JSON-ready Python values."""
    if isinstance(x, dict):
        return {str(k): to_plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


@dataclass
class Context:
    cocycle: object
    splitting: object
    tolerances: dict
    seed: int
    horizon: int = None

    def split(self):
        c = self.cocycle
        if c.splitting is None:
            c = c.with_splitting(self.splitting)
        return c

    def horizon_for(self, a, default):
        if "horizon" in a:
            return a["horizon"]
        if self.horizon is not None:
            return self.horizon
        if self.cocycle is not None and self.cocycle.horizon is not None:
            return self.cocycle.horizon
        return default


def _theta_series(ctx, a):
    j = a.get("j", 0)
    n_max = ctx.horizon_for(a, DEFAULT_SERIES_HORIZON)
    c = ctx.split()
    if c.horizon is not None:
        n_max = min(n_max, c.horizon - j)
    if n_max < 1:
        raise InvalidInput(f"window start {j} leaves no room before the horizon")
    rows = list(iter_theta(c, j, n_max))
    ns = np.array([r[0] for r in rows], dtype=float)
    lt = np.array([r[1] for r in rows])
    slope = float(np.polyfit(ns, lt, 1)[0]) if len(rows) > 1 else float(lt[0])
    results = {"j": j, "n_max": n_max, "slope": slope, "final_log_theta": lt[-1]}
    return {}, results, (["n", "log_theta"], rows)


def _ph_check(ctx, a):
    v = ph_check(ctx.split(), k=a.get("k", 1), variant=a.get("variant", "relative"))
    return {"partially_hyperbolic": v.holds}, {"variant": v.variant, "k": v.k,
                                               "margins": v.margins}, None


def _lyapunov_report(ctx, a):
    method = a.get("method", "eigen_constant" if ctx.cocycle.period is not None else "qr")
    if method == "eigen_constant":
        return lyapunov_eigen(ctx.cocycle)
    n = ctx.horizon_for(a, DEFAULT_LYAPUNOV_HORIZON)
    burn = a.get("burn_in", 0)
    if ctx.cocycle.horizon is not None and "horizon" not in a:
        n = ctx.cocycle.horizon - burn
    fn = lyapunov_qr if method == "qr" else lyapunov_exterior
    return fn(ctx.cocycle, n, burn_in=burn)


def _lyapunov(ctx, a):
    rep = _lyapunov_report(ctx, a)
    results = {"method": rep.method, "horizon": rep.horizon, "burn_in": rep.burn_in,
               "exponents": rep.exponents, "partial_sums": rep.partial_sums,
               "convergence": rep.convergence, "symplectic_defect": rep.symplectic_defect}
    rows = [(i + 1, e, s) for i, (e, s) in enumerate(zip(rep.exponents, rep.partial_sums))]
    return {}, results, (["i", "exponent", "partial_sum"], rows)


def _spectrum_bunching(ctx, a):
    rep = _lyapunov_report(ctx, a)
    sb = spectrum_bunching_test(rep.exponents, ctx.splitting, symplectic=ctx.cocycle.symplectic,
                                tol=ctx.tolerances["symmetry_tol"])
    verdicts = {"spectrum_forward_bunched": sb.forward, "spectrum_backward_bunched": sb.backward}
    results = {"exponents": rep.exponents, "method": rep.method,
               "forward_slack": sb.forward_slack, "backward_slack": sb.backward_slack,
               "shortcut_slack": sb.shortcut_slack}
    return verdicts, results, None


def _witness(ctx, a):
    direction = a.get("direction", "forward")
    horizon = ctx.horizon_for(a, DEFAULT_SERIES_HORIZON)
    try:
        v = witness_build(ctx.split(), a["tau"], horizon, ctx.tolerances["ratio_tol"],
                          direction=direction)
    except StallDetected as exc:
        v = exc.verdict
    key = f"{direction}_bunched"
    verdicts = {key: v.holds, "witness_result": v.result}
    results = {"direction": direction, "tau": v.tau, "theta": v.theta_base,
               "horizon": v.horizon, "result": v.result, "tail_ratio": v.tail_ratio,
               "stall_at": v.stall_at, "liminf_estimate": v.liminf_estimate,
               "liminf_window": v.liminf_window, "refutation": v.refutation,
               "witness_length": len(v.indices)}
    rows = list(enumerate(v.indices))
    return verdicts, results, (["k", "i_k"], rows)


def _uniform(ctx, a):
    v = uniform_bunching_check(ctx.split(), a["theta"], a["m_max"], a.get("horizon"))
    results = {"m": v.m, "log_c": v.log_c, "m_max": v.m_max, "per_start": v.per_start}
    return {"uniformly_bunched": v.uniform}, results, None


def _ellipticity(ctx, a):
    c = ctx.cocycle
    if c.period is None:
        raise InvalidInput("ellipticity needs a constant or periodic cocycle")
    P = np.eye(c.dim)
    for k in range(c.period):
        P = c.factor(k) @ P
    v = ellipticity_check(P, c.period, a["eps"])
    return {"elliptic": v.elliptic}, {"max_rate": v.max_rate, "period": c.period}, None


def _domination(ctx, a):
    c = ctx.cocycle
    if c.splitting is not None and c.splitting.d_c:
        raise InvalidInput("domination needs an unsplit or two-block cocycle")
    r = domination_search(c, a["index"], a["m_max"])
    verdicts = {"dominated": r.dominated, "domination_m": r.m}
    results = {"index": r.index, "m": r.m, "margin": r.margin, "ratio": r.ratio,
               "m_max": r.m_max}
    rows = list(enumerate(r.margins, start=1))
    return verdicts, results, (["m", "log_margin"], rows)


def _remark(ctx, a):
    m_list = a["m_list"]
    need = max((2 ** (m + 2) - 2 for m in m_list), default=1)
    horizon = a.get("horizon", ctx.horizon or need)
    rep = gallery.verify_remark(horizon, m_list)
    results = {name: {"passed": chk.passed, "max_error": chk.max_error, "detail": chk.detail}
               for name, chk in rep.checks.items()}
    results = {"horizon": horizon, "m_list": m_list, "checks": results}
    return {"remark_verified": rep.passed}, results, None


def _product(ctx, a):
    spec = {"product-basic": gallery.product_basic,
            "product-obstructed": gallery.product_obstructed}[a["model"]]()
    rep = gallery.product_model_check(spec)
    conds = {str(k): {"holds": v.holds, "log_slacks": v.slacks, "strict": v.strict}
             for k, v in rep.conditions.items()}
    results = {"model": a["model"], "anosov": "asserted", "conditions": conds,
               "obstruction": rep.obstruction}
    verdicts = {"product_conditions_hold": rep.conditions_hold,
                "obstruction_triggered": rep.obstruction["triggered"]}
    return verdicts, results, None


def _katok(ctx, a):
    d = gallery.katok_assemble(gallery.katok_linear(), a["epsilon"],
                               samples=a.get("samples", 64), seed=ctx.seed)
    ok = d.max_symplectic_residual <= KATOK_RESIDUAL_TOL
    c0 = np.linalg.norm(d.values - d.samples @ d.linear_map.T, axis=1)
    rows = [(i, float(e), float(r)) for i, (e, r) in enumerate(zip(c0, d.residuals))]
    results = {"epsilon": a["epsilon"], "c0_distance": d.c0_distance,
               "max_symplectic_residual": d.max_symplectic_residual}
    return {"katok_symplectic": ok}, results, (["sample", "c0_error", "symplectic_residual"],
                                              rows)


def flatten_factors(c, horizon=None):
    n = horizon or c.horizon or c.period
    if n is None:
        raise InvalidInput("flatten needs a finite horizon or a period")
    return [c.factor(k) for k in range(n)]


def flatten_payload(inp, result, cert):
    return {
        "eps": inp.eps, "n": inp.n, "d": result.d, "circle_count": result.circle_count,
        "max_deviation": result.max_deviation, "deviation_bound": cert.deviation_bound,
        "circle_residual": result.circle_residual, "scaled_levels": result.scaled_levels,
        "certificate": {
            "passed": cert.passed, "in_band_count": cert.in_band_count,
            "circle_count": cert.circle_count,
            "max_symplectic_residual": cert.max_symplectic_residual,
            "invariance_residual": cert.invariance_residual,
            "out_of_band_error": cert.out_of_band_error,
        },
        "perturbations": result.perturbations,
    }


def _flatten(ctx, a):
    factors = flatten_factors(ctx.cocycle, a.get("horizon", ctx.horizon))
    inp = FlatteningInput(factors, a["eps"], ctx.tolerances["gap_tol"])
    result = flatten(inp)
    cert = verify_flattening(inp, result, ctx.tolerances["exponent_tol"])
    return {"flattening_certified": cert.passed}, flatten_payload(inp, result, cert), None


HANDLERS = {
    "theta_series": _theta_series,
    "ph_check": _ph_check,
    "lyapunov": _lyapunov,
    "spectrum_bunching": _spectrum_bunching,
    "witness": _witness,
    "uniform_bunching": _uniform,
    "ellipticity": _ellipticity,
    "domination": _domination,
    "remark_verify": _remark,
    "product_model": _product,
    "katok": _katok,
    "flatten": _flatten,
}


def run_analysis(ctx, a):
    verdicts, results, series = HANDLERS[a["kind"]](ctx, a)
    params = {k: v for k, v in a.items() if k not in ("id", "kind")}
    entry = {"id": a["id"], "kind": a["kind"], "params": params,
             "verdicts": verdicts, "results": results}
    return to_plain(entry), series


def run_all(ctx, analyses, threads=1):
    """Run analyses (possibly in parallel); results come back in input order."""
    if threads <= 1:
        return [run_analysis(ctx, a) for a in analyses]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: run_analysis(ctx, a), analyses))


def resolve_expectations(analyses, expect, strict=False):
    """Map each ``expect`` key to ``(analysis id, verdict key)``.

    A plain key must be produced by exactly one analysis; ``id.key`` selects
    one explicitly.  Unknown keys raise :class:`InvalidInput` in strict mode
    and are returned separately otherwise.
    """
    owners = {}
    for a in analyses:
        for key in VERDICT_KEYS[a["kind"]]:
            owners.setdefault(key, []).append(a["id"])
    ids = {a["id"]: a for a in analyses}
    resolved, unknown = {}, []
    for key in expect:
        if "." in key:
            aid, vkey = key.split(".", 1)
            if aid in ids and vkey in VERDICT_KEYS[ids[aid]["kind"]]:
                resolved[key] = (aid, vkey)
                continue
        elif len(owners.get(key, [])) == 1:
            resolved[key] = (owners[key][0], key)
            continue
        elif len(owners.get(key, [])) > 1:
            raise InvalidInput(f"$.expect.{key}: ambiguous, produced by {owners[key]}")
        unknown.append(key)
    if unknown and strict:
        raise InvalidInput(f"$.expect: no analysis produces {unknown}")
    return resolved, unknown


def _matches(expected, actual, tol):
    if isinstance(expected, bool) or isinstance(actual, bool) or expected is None:
        return expected is actual or expected == actual and type(expected) is type(actual)
    if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        return abs(expected - actual) <= tol * max(1.0, abs(expected))
    return expected == actual


def check_expectations(entries, expect, resolved, tol):
    by_id = {e["id"]: e for e in entries}
    checks = []
    for key, (aid, vkey) in resolved.items():
        actual = by_id[aid]["verdicts"].get(vkey)
        checks.append({"key": key, "expected": expect[key], "actual": actual,
                       "ok": _matches(expect[key], actual, tol)})
    return checks
