"""Scenario files: schema validation and cocycle construction.

A scenario is a JSON document validated against ``scenario.schema.json``
(strict: unknown fields are rejected with their path).  Validation and all
semantic checks run before any computation.
"""

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np
import scipy.linalg

from . import gallery
from .cocycle import Cocycle
from .errors import InvalidInput
from .spectral import GAP_TOL, TOL_SYM_EXP
from .symplectic_core import SplittingSpec, random_symplectic

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "gap_tol": GAP_TOL,
    "ratio_tol": 0.05,
    "exponent_tol": 1e-5,
    "symmetry_tol": TOL_SYM_EXP,
    "expect_tol": 1e-9,
}


def load_schema():
    text = resources.files("cocyclab").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _path(error):
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    return "$" + parts


def validate_document(doc, definition=None):
    """Raise :class:`InvalidInput` naming the first offending path."""
    schema = load_schema()
    if definition is not None:
        schema = {"$ref": f"#/$defs/{definition}", "$defs": schema["$defs"]}
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise InvalidInput(f"{_path(err)}: {err.message}")


def read_json(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(raw), raw
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"{path}: malformed JSON ({exc})") from exc


@dataclass
class Scenario:
    doc: dict
    sha256: str
    seed: int
    tolerances: dict
    horizon_override: int = None
    cocycle: Cocycle = None
    splitting: SplittingSpec = None
    analyses: list = field(default_factory=list)

    @property
    def name(self):
        return self.doc.get("name")


def _matrix(rows, where):
    lengths = {len(r) for r in rows}
    if len(lengths) != 1 or lengths.pop() != len(rows):
        raise InvalidInput(f"{where}: matrix must be square")
    return np.array(rows, dtype=float)


def _word_rule(word):
    return lambda j: word[j % len(word)]


def _doubling_rule(symbols):
    first, second = symbols

    def rule(j):
        return first if gallery.remark_symbol(j) == "A" else second

    return rule


def _random_block(dim, spread, rng):
    G = rng.normal(size=(dim, dim))
    g = np.linalg.norm(G, 2)
    return scipy.linalg.expm(G * (spread / g)) if spread and g else np.eye(dim)


def _random_factors(src, dim, splitting, symplectic, seed):
    period = src.get("period", 1)
    spread = src["spread"]
    if symplectic:
        if dim % 2:
            raise InvalidInput("$.cocycle: symplectic random factors need even dimension")
        if splitting is not None and splitting.d_c != dim:
            raise InvalidInput("$.cocycle: symplectic random factors cannot carry a splitting")
        return [random_symplectic(dim // 2, spread, [seed, k]) for k in range(period)]
    rng = np.random.default_rng(seed)
    sizes = [dim] if splitting is None else [s for s in splitting.sizes().values() if s]
    return [scipy.linalg.block_diag(*(_random_block(s, spread, rng) for s in sizes))
            for _ in range(period)]


def build_cocycle(doc, seed, horizon_override=None):
    """Cocycle and splitting described by ``doc['cocycle']`` (``None`` if absent)."""
    src = doc.get("cocycle")
    splitting = SplittingSpec(*doc["splitting"]) if "splitting" in doc else None
    symplectic = doc.get("symplectic")
    if src is None:
        return None, splitting
    kind = src["kind"]
    horizon = src.get("horizon", horizon_override)
    name = doc.get("name")
    if kind == "gallery":
        c = gallery.remark_cocycle(horizon)
        if splitting is not None and splitting != c.splitting:
            raise InvalidInput(f"$.splitting: the remark cocycle is split as {c.splitting}")
        return c, c.splitting
    if kind == "explicit":
        mats = [_matrix(M, f"$.cocycle.matrices[{i}]") for i, M in enumerate(src["matrices"])]
        c = Cocycle.explicit(mats, symplectic=symplectic, name=name)
    elif kind == "constant":
        c = Cocycle.constant(_matrix(src["matrix"], "$.cocycle.matrix"), horizon=horizon,
                             symplectic=symplectic, name=name)
    elif kind == "periodic":
        mats = [_matrix(M, f"$.cocycle.matrices[{i}]") for i, M in enumerate(src["matrices"])]
        c = Cocycle.periodic(mats, horizon=horizon, symplectic=symplectic, name=name)
    elif kind == "schedule":
        alphabet = {k: _matrix(M, f"$.cocycle.alphabet.{k}") for k, M in src["alphabet"].items()}
        rule = src["rule"]
        if rule["type"] == "word":
            symbols, period = set(rule["word"]), len(rule["word"])
            fn = _word_rule(rule["word"])
        else:
            symbols, period = set(rule["symbols"]), None
            fn = _doubling_rule(rule["symbols"])
        missing = sorted(symbols - set(alphabet))
        if missing:
            raise InvalidInput(f"$.cocycle.rule: symbols {missing} are not in the alphabet")
        c = Cocycle.schedule(fn, alphabet, horizon=horizon, period=period,
                             symplectic=symplectic, name=name)
    else:
        dim = doc.get("dimension")
        if dim is None:
            raise InvalidInput("$.dimension: required for a random cocycle")
        mats = _random_factors(src, dim, splitting, bool(symplectic), src.get("seed", seed))
        c = Cocycle.periodic(mats, horizon=horizon, symplectic=symplectic, name=name)
    if "dimension" in doc and doc["dimension"] != c.dim:
        raise InvalidInput(f"$.dimension: {doc['dimension']} does not match factors ({c.dim})")
    if splitting is not None and splitting.dim != c.dim:
        raise InvalidInput(f"$.splitting: {splitting} does not sum to dimension {c.dim}")
    return c, splitting


NEEDS_COCYCLE = {"theta_series", "ph_check", "lyapunov", "spectrum_bunching", "witness",
                 "uniform_bunching", "ellipticity", "domination", "flatten"}
NEEDS_SPLITTING = {"theta_series", "ph_check", "spectrum_bunching", "witness",
                   "uniform_bunching"}


def _assign_ids(analyses):
    counts = {}
    for a in analyses:
        counts[a["kind"]] = counts.get(a["kind"], 0) + 1
    seen = {}
    ids = []
    for a in analyses:
        if "id" in a:
            aid = a["id"]
        elif counts[a["kind"]] == 1:
            aid = a["kind"]
        else:
            seen[a["kind"]] = seen.get(a["kind"], 0) + 1
            aid = f"{a['kind']}-{seen[a['kind']]}"
        ids.append(aid)
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise InvalidInput(f"$.analyses: duplicate analysis ids {dupes}")
    return ids


def load_scenario(path, *, seed=None, tol_scale=1.0, horizon=None):
    """Read, validate and build a scenario; raises :class:`InvalidInput`."""
    doc, raw = read_json(path)
    return scenario_from_doc(doc, raw, seed=seed, tol_scale=tol_scale, horizon=horizon)


def scenario_from_doc(doc, raw=None, *, seed=None, tol_scale=1.0, horizon=None):
    validate_document(doc)
    if not tol_scale > 0:
        raise InvalidInput("--tol-scale must be positive")
    if raw is None:
        raw = json.dumps(doc, sort_keys=True).encode()
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(doc.get("tolerances", {}))
    tolerances = {k: v * tol_scale for k, v in tolerances.items()}
    seed = doc.get("seed", 0) if seed is None else seed
    c, splitting = build_cocycle(doc, seed, horizon)
    ids = _assign_ids(doc["analyses"])
    analyses = []
    for i, (aid, a) in enumerate(zip(ids, doc["analyses"])):
        where = f"$.analyses[{i}]"
        if a["kind"] in NEEDS_COCYCLE and c is None:
            raise InvalidInput(f"{where}: analysis {a['kind']!r} needs a cocycle")
        if a["kind"] in NEEDS_SPLITTING and splitting is None:
            raise InvalidInput(f"{where}: analysis {a['kind']!r} needs a splitting")
        analyses.append({**a, "id": aid})
    return Scenario(doc, hashlib.sha256(raw).hexdigest(), seed, tolerances, horizon,
                    c, splitting, analyses)
