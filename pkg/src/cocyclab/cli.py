"""Command-line front end.

    cocyclab run SCENARIO OUT_DIR [--horizon N] [--tol-scale X] [--seed S]
                 [--threads T] [--format json|csv] [--expect-strict]
    cocyclab flatten [INPUT] OUT_DIR [--factors JSON] [--eps E] [--verify-only]
    cocyclab gallery

Exit codes: 0 ok, 1 verdict mismatch, 2 input or validation error,
3 numerical failure.  Outputs are written only after every computation
succeeded, so a failing run leaves no partial files behind.
"""

import argparse
import csv
import io
import json
import os
import sys
import time

from . import __version__, gallery
from .errors import CertificationFailure, InvalidInput, NumericalFailure
from .flatten import FlatteningInput, FlatteningResult, flatten, verify_flattening
from .runner import (
    Context,
    check_expectations,
    flatten_payload,
    resolve_expectations,
    run_all,
    to_plain,
)
from .scenario import SCHEMA_VERSION, load_scenario, read_json, validate_document

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


def dumps_report(report):
    """Canonical JSON: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_report(text):
    return json.loads(text)


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def series_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in to_plain(rows):
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def series_json(columns, rows):
    return dumps_report({"columns": list(columns), "rows": to_plain(rows)})


def write_outputs(out_dir, files):
    """Write ``{name: text}`` into ``out_dir`` with LF line endings."""
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        tmp = os.path.join(out_dir, f".{name}.tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(out_dir, name))


def _provenance(sc, flags):
    return {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.name,
        "scenario_sha256": sc.sha256,
        "seed": sc.seed,
        "tolerances": sc.tolerances,
        "tol_scale": flags.tol_scale,
        "horizon_override": flags.horizon,
    }


def cmd_run(args):
    sc = load_scenario(args.scenario, seed=args.seed, tol_scale=args.tol_scale,
                       horizon=args.horizon)
    expect = sc.doc.get("expect", {})
    resolved, unknown = resolve_expectations(sc.analyses, expect, strict=args.expect_strict)
    for key in unknown:
        print(f"warning: expect key {key!r} matches no verdict; ignored", file=sys.stderr)
    if args.threads < 1:
        raise InvalidInput("--threads must be >= 1")

    ctx = Context(sc.cocycle, sc.splitting, sc.tolerances, sc.seed, args.horizon)
    started = time.perf_counter()
    outcomes = run_all(ctx, sc.analyses, threads=args.threads)
    elapsed = time.perf_counter() - started

    entries, files = [], {}
    ext = args.format
    for entry, series in outcomes:
        if series is not None:
            name = f"{entry['id']}.{ext}"
            files[name] = series_csv(*series) if ext == "csv" else series_json(*series)
            entry["series"] = name
        else:
            entry["series"] = None
        entries.append(entry)
    checks = check_expectations(entries, expect, resolved, sc.tolerances["expect_tol"])
    passed = all(c["ok"] for c in checks)
    report = {
        "provenance": _provenance(sc, args),
        "analyses": entries,
        "expect": {"checks": checks, "passed": passed, "ignored": unknown},
    }
    files["report.json"] = dumps_report(to_plain(report))
    # wall-clock times vary run to run; they live outside the reproducible report
    files["timings.json"] = dumps_report({"total_seconds": elapsed, "threads": args.threads})
    write_outputs(args.out_dir, files)
    for c in checks:
        if not c["ok"]:
            print(f"mismatch: {c['key']} expected {c['expected']!r}, got {c['actual']!r}",
                  file=sys.stderr)
    return EXIT_OK if passed else EXIT_MISMATCH


def _flatten_request(args):
    if args.input is not None:
        doc, _ = read_json(args.input)
    else:
        doc = {"schema_version": SCHEMA_VERSION}
    if args.factors is not None:
        try:
            doc["factors"] = json.loads(args.factors)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"--factors: malformed JSON ({exc})") from exc
    if args.eps is not None:
        doc["eps"] = args.eps
    if args.perturbations is not None:
        doc["perturbations"], _ = read_json(args.perturbations)
    validate_document(doc, "flatten_request")
    return doc


def cmd_flatten(args):
    doc = _flatten_request(args)
    gap = doc.get("gap_tol")
    inp = FlatteningInput(doc["factors"], doc["eps"], *(() if gap is None else (gap,)))
    if args.verify_only:
        if "perturbations" not in doc:
            raise InvalidInput("--verify-only needs perturbation matrices")
        shell = FlatteningResult(doc["perturbations"], None, None, None, None, None, [], None)
        try:
            cert = verify_flattening(inp, shell)
        except CertificationFailure as exc:
            payload = {"eps": inp.eps, "n": inp.n, "certified": False,
                       "violations": exc.violations}
            write_outputs(args.out_dir, {"flatten.json": dumps_report(to_plain(payload))})
            print(f"certification failed: {exc}", file=sys.stderr)
            return EXIT_MISMATCH
        payload = {"eps": inp.eps, "n": inp.n, "certified": True,
                   "certificate": cert.__dict__}
    else:
        result = flatten(inp)
        cert = verify_flattening(inp, result)
        payload = {"certified": True, **flatten_payload(inp, result, cert)}
    write_outputs(args.out_dir, {"flatten.json": dumps_report(to_plain(payload))})
    return EXIT_OK


def cmd_gallery(args):
    for key, desc, topic in gallery.list_gallery():
        print(f"{key}\t{desc} [{topic}]")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cocyclab", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("out_dir")
    r.add_argument("--horizon", type=int, default=None,
                   help="default horizon for analyses and rule-based sources")
    r.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--threads", type=int, default=1, help="run analyses in parallel")
    r.add_argument("--format", choices=["json", "csv"], default="csv",
                   help="format of data series files")
    r.add_argument("--expect-strict", action="store_true",
                   help="reject expect keys that no analysis produces")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("flatten", help="flatten in-band eigenvalues of a product")
    f.add_argument("input", nargs="?", default=None, help="JSON request file")
    f.add_argument("out_dir")
    f.add_argument("--factors", default=None, help="inline JSON list of matrices")
    f.add_argument("--eps", type=float, default=None)
    f.add_argument("--perturbations", default=None, help="JSON file of B matrices")
    f.add_argument("--verify-only", action="store_true",
                   help="certify supplied perturbations instead of constructing them")
    f.set_defaults(func=cmd_flatten)

    g = sub.add_parser("gallery", help="list named constructions")
    g.set_defaults(func=cmd_gallery)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
