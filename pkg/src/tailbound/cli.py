"""Command-line interface.

Subcommands: ``eval``, ``table``, ``crossings``, ``verify-exact``,
``verify-mc`` and ``selfcheck``. Tables go to ``--out`` (or stdout) as CSV or
JSON with lowercase column names in a fixed order and floats written in
shortest round-trip form.

Exit codes: 0 success / no violation, 1 violation or failed check,
2 usage or configuration error.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .bounds import (
    EXP_LAMBDA,
    LAMBDA,
    ONE_SIDED,
    TWO_SIDED,
    BoundKind,
    bound,
    crossing_residuals,
    solve_crossings,
    v_bound,
    w_bound,
)
from .errors import TailboundError, UsageError
from .monotonicity import matches_printed, ratio_cases, verify_lhopital_case
from .oracle import (
    MIN_MC_SAMPLES,
    DiscreteZeroMeanDistribution,
    HilbertInstance,
    MartingaleSpec,
    TwoPointRule,
    WeightVector,
    bounded_source,
    hilbert_source,
    martingale_source,
    rademacher_source,
    verify_instance,
    violation_flags,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

BOUND_ORDER = (
    BoundKind.HOEFFDING,
    BoundKind.V,
    BoundKind.W,
    BoundKind.WTILDE,
    BoundKind.EDELMAN15,
    BoundKind.MARKOV2,
)
DEFAULT_GRID = "0.1:6.4:64:log"
PRINTED_DIGITS = {"lambda": "1.495", "z_v": "1.312", "z_w": "1.365", "z_wtilde": "1.865"}


# --- formatting -------------------------------------------------------------


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_table(columns, rows, fmt="csv"):
    """Render rows as CSV or JSON text."""
    if fmt == "json":
        records = [dict(zip(columns, (_jsonable(v) for v in row))) for row in rows]
        return json.dumps(records, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def read_table(text, fmt="csv"):
    """Inverse of :func:`write_table`: returns ``(columns, rows)``."""
    if fmt == "json":
        records = json.loads(text)
        columns = list(records[0]) if records else []
        return columns, [[r[c] for c in columns] for r in records]
    reader = csv.reader(io.StringIO(text))
    columns = next(reader)
    return columns, [[_parse_value(v) for v in row] for row in reader]


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- argument parsing -------------------------------------------------------


def parse_grid(spec):
    """``start:stop:points:lin|log`` -> array of grid points."""
    parts = spec.split(":")
    if len(parts) != 4:
        raise UsageError(f"grid must be start:stop:points:lin|log, got {spec!r}")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid has non-numeric fields: {spec!r}") from None
    spacing = parts[3].lower()
    if not (math.isfinite(start) and math.isfinite(stop)) or start <= 0:
        raise UsageError(f"grid start must be positive and finite, got {parts[0]!r}")
    if points < 1:
        raise UsageError(f"grid needs at least one point, got {points}")
    if points > 1 and stop <= start:
        raise UsageError("grid stop must exceed start")
    if spacing in ("lin", "linear"):
        return np.linspace(start, stop, points)
    if spacing == "log":
        return np.geomspace(start, stop, points)
    raise UsageError(f"grid spacing must be lin or log, got {parts[3]!r}")


def parse_bounds(text, default=BOUND_ORDER):
    if not text:
        return list(default)
    try:
        chosen = {BoundKind.parse(name) for name in text.split(",") if name.strip()}
    except TailboundError as exc:
        raise UsageError(str(exc)) from None
    if not chosen:
        raise UsageError("--bounds is empty")
    return [k for k in BOUND_ORDER if k in chosen]


def _x_values(args):
    if args.x is not None and args.grid is not None:
        raise UsageError("give either --x or --grid, not both")
    if args.x is not None:
        try:
            xs = np.array([float(v) for v in args.x.split(",")])
        except ValueError:
            raise UsageError(f"--x must be numbers, got {args.x!r}") from None
        if not np.all(np.isfinite(xs)):
            raise UsageError("--x values must be finite")
        return xs
    return parse_grid(args.grid or DEFAULT_GRID)


# --- instance files ---------------------------------------------------------


def _field(data, key, path):
    if key not in data:
        raise UsageError(f"{path}: missing field '{key}'")
    return data[key]


def _numbers(value, where, path, ndim=1):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise UsageError(f"{path}: field '{where}' must be numeric") from None
    if arr.ndim != ndim or arr.size == 0:
        raise UsageError(f"{path}: field '{where}' must be a non-empty {ndim}-D array")
    bad = np.flatnonzero(~np.isfinite(arr.ravel()))
    if bad.size:
        raise UsageError(f"{path}: field '{where}' has a non-finite entry at flat index {bad[0]}")
    return arr


def _dists(items, path, where="dists"):
    if not isinstance(items, list):
        raise UsageError(f"{path}: field '{where}' must be a list")
    out = []
    for i, item in enumerate(items):
        name = f"{where}[{i}]"
        if not isinstance(item, dict):
            raise UsageError(f"{path}: field '{name}' must be an object")
        support = _numbers(_field(item, "support", path), f"{name}.support", path)
        probs = _numbers(_field(item, "probs", path), f"{name}.probs", path)
        try:
            out.append(DiscreteZeroMeanDistribution(support, probs))
        except TailboundError as exc:
            raise UsageError(f"{path}: field '{name}': {exc}") from None
    return out


def load_instance(path):
    """Read an instance file; returns ``(type, object, two_sided)``.

    Schema (``two_sided`` optional, default false; ignored for hilbert)::

        {"type": "rademacher", "weights": [...]}
        {"type": "bounded", "weights": [...],
         "dists": [{"support": [...], "probs": [...]}, ...]}
        {"type": "martingale", "weights": [...],
         "rule": {"kind": "window"|"ups", "u": [[...]], "v": [[...]]}}
        {"type": "hilbert", "vectors": [[...], ...], "dists": [...],
         "normalize": true}
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read instance file: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a JSON object")
    kind = _field(data, "type", path)
    two_sided = bool(data.get("two_sided", False))
    try:
        if kind == "rademacher":
            w = WeightVector(_numbers(_field(data, "weights", path), "weights", path))
            return kind, w, two_sided
        if kind == "bounded":
            w = WeightVector(_numbers(_field(data, "weights", path), "weights", path))
            dists = _dists(_field(data, "dists", path), path)
            if len(dists) != w.n:
                raise UsageError(f"{path}: {w.n} weights but {len(dists)} dists")
            return kind, (w, dists), two_sided
        if kind == "martingale":
            w = WeightVector(_numbers(_field(data, "weights", path), "weights", path))
            rule = _field(data, "rule", path)
            if not isinstance(rule, dict):
                raise UsageError(f"{path}: field 'rule' must be an object")
            u = _numbers(_field(rule, "u", path), "rule.u", path, ndim=2)
            v = _numbers(_field(rule, "v", path), "rule.v", path, ndim=2)
            spec = MartingaleSpec(w, TwoPointRule(rule.get("kind", "window"), u, v))
            return kind, spec, two_sided
        if kind == "hilbert":
            vectors = _numbers(_field(data, "vectors", path), "vectors", path, ndim=2)
            dists = _dists(_field(data, "dists", path), path)
            if data.get("normalize", False):
                inst = HilbertInstance.normalized(vectors, dists)
            else:
                inst = HilbertInstance(vectors, dists)
            return kind, inst, True
    except UsageError:
        raise
    except TailboundError as exc:
        raise UsageError(f"{path}: {exc}") from None
    raise UsageError(
        f"{path}: field 'type' must be rademacher, bounded, martingale or hilbert, got {kind!r}"
    )


# --- subcommands ------------------------------------------------------------


def cmd_eval(args):
    xs = _x_values(args)
    kinds = parse_bounds(args.bounds)
    rows = [[x] + [bound(k, x, strict=args.strict) for k in kinds] for x in xs]
    _emit(write_table(["x"] + [k.value for k in kinds], rows, args.format), args.out)
    return EXIT_OK


def cmd_table(args):
    xs = _x_values(args)
    columns = ["x"] + [k.value for k in BOUND_ORDER] + ["w_over_v"]
    rows = []
    for x in xs:
        values = [bound(k, x, strict=args.strict) for k in BOUND_ORDER]
        v, w = values[1], values[2]
        rows.append([x] + values + [w / v if v > 0 else math.nan])
    _emit(write_table(columns, rows, args.format), args.out)
    return EXIT_OK


def cmd_crossings(args):
    crossings = solve_crossings()
    residuals = crossing_residuals(crossings)
    rows = [[name, getattr(crossings, name), residuals[name]] for name in residuals]
    _emit(write_table(["name", "value", "residual"], rows, args.format), args.out)
    return EXIT_OK


REPORT_FIXED = ["x", "tail", "margin"]


def _report_table(report):
    kinds = [k for k in BOUND_ORDER if k in report.bounds]
    columns = REPORT_FIXED + [k.value for k in kinds] + ["violation"]
    rows = []
    for i, x in enumerate(report.x):
        rows.append(
            [x, report.tail[i], report.margin[i]]
            + [report.bounds[k][i] for k in kinds]
            + [bool(report.violation[i])]
        )
    return columns, rows


def _run_verification(args, source, two_sided):
    default = TWO_SIDED if two_sided else ONE_SIDED
    kinds = parse_bounds(args.bounds, default=[k for k in BOUND_ORDER if k in default])
    report = verify_instance(source, kinds, _x_values(args))
    columns, rows = _report_table(report)
    _emit(write_table(columns, rows, args.format), args.out)
    print(
        f"{report.source}: {report.n_violations} violation(s) on {len(report.x)} points",
        file=sys.stderr,
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


def recheck_report(path, fmt="csv"):
    """Recompute violation flags of a saved report; returns the number of violations."""
    try:
        with open(path, encoding="utf-8") as fh:
            columns, rows = read_table(fh.read(), fmt)
    except OSError as exc:
        raise UsageError(f"{path}: cannot read report: {exc.strerror}") from None
    except (ValueError, StopIteration) as exc:
        raise UsageError(f"{path}: malformed report: {exc}") from None
    missing = [c for c in REPORT_FIXED if c not in columns]
    bound_cols = [c for c in columns if c in {k.value for k in BoundKind}]
    if missing or not bound_cols:
        raise UsageError(f"{path}: report needs columns x, tail, margin and at least one bound")
    try:
        col = {
            c: np.array([float(row[j]) for row in rows], dtype=float)
            for j, c in enumerate(columns)
            if c != "violation"
        }
    except (TypeError, ValueError, IndexError):
        raise UsageError(f"{path}: report has non-numeric cells") from None
    flags = violation_flags(col["tail"], col["margin"], [col[c] for c in bound_cols])
    return int(np.count_nonzero(flags))


def cmd_verify_exact(args):
    if args.recheck:
        n = recheck_report(args.recheck, args.format)
        print(f"{args.recheck}: {n} violation(s)", file=sys.stderr)
        return EXIT_OK if n == 0 else EXIT_VIOLATION
    if not args.instance:
        raise UsageError("verify-exact needs --instance (or --recheck)")
    kind, obj, two_sided = load_instance(args.instance)
    if kind == "rademacher":
        source = rademacher_source(obj, two_sided)
    elif kind == "bounded":
        source = bounded_source(*obj, two_sided)
    else:
        raise UsageError(f"{args.instance}: type {kind!r} needs verify-mc")
    return _run_verification(args, source, two_sided)


def cmd_verify_mc(args):
    if not args.instance:
        raise UsageError("verify-mc needs --instance")
    if args.samples < MIN_MC_SAMPLES:
        raise UsageError(f"--samples must be at least {MIN_MC_SAMPLES}")
    kind, obj, two_sided = load_instance(args.instance)
    if kind == "martingale":
        source = martingale_source(obj, args.samples, args.seed, two_sided)
    elif kind == "hilbert":
        source = hilbert_source(obj, args.samples, args.seed)
    else:
        raise UsageError(f"{args.instance}: type {kind!r} needs verify-exact")
    return _run_verification(args, source, two_sided)


def selfcheck_rows(lambda_shift=0.0):
    """Run the internal consistency checks; returns rows ``[status, check, value, detail]``.

    ``lambda_shift`` perturbs the constant used to solve for the crossing
    points (residuals are still measured with the true constant), so a
    nonzero shift must make the crossing checks fail.
    """
    rows = []

    def record(name, ok, value, detail=""):
        rows.append(["PASS" if ok else "FAIL", name, value, detail])

    record("constants.lambda", matches_printed(LAMBDA, PRINTED_DIGITS["lambda"]), LAMBDA,
           "ln(2e^3/9) = 1.495...")
    record("constants.exp_lambda", abs(math.exp(LAMBDA) - EXP_LAMBDA) <= math.ulp(EXP_LAMBDA),
           EXP_LAMBDA, "exp(lambda) == 2e^3/9 within 1 ulp")

    crossings = solve_crossings(LAMBDA + lambda_shift)
    residuals = crossing_residuals(crossings)
    for name, residual in residuals.items():
        value = getattr(crossings, name)
        record(f"crossing.{name}.digits", matches_printed(value, PRINTED_DIGITS[name]), value,
               f"expected {PRINTED_DIGITS[name]}...")
        record(f"crossing.{name}.residual", residual <= 1e-12, residual, "<= 1e-12")

    for name, case in ratio_cases().items():
        verdict = verify_lhopital_case(case)
        rho = verdict.rho
        record(f"ratio.{name}.rho_pattern", rho.matches, rho.switch_point if rho.switch_point
               is not None else math.nan, f"{rho.detected_pattern} (expected {rho.expected})")
        if case.rho_switch is not None and rho.switch_point is not None:
            err = abs(rho.switch_point - case.rho_switch)
            record(f"ratio.{name}.rho_switch", err <= 1e-6, rho.switch_point,
                   f"analytic {case.rho_switch!r}")
        detected = verdict.r.detected_pattern if verdict.r else "not evaluated"
        record(f"ratio.{name}.r_pattern", bool(verdict.conclusion_ok),
               verdict.min_r_above_one if verdict.min_r_above_one is not None else math.nan,
               f"{detected} (expected {case.expected_r_pattern})")
        record(f"ratio.{name}.limits", verdict.limits_ok, max(map(abs, verdict.limit_values)),
               f"f, g below 1e-15 at x={case.limit_point!r}")
        record(f"ratio.{name}.finite_difference", verdict.fd_max_rel_error <= 1e-6,
               verdict.fd_max_rel_error, "closed-form rho vs f'/g'")
        for label, value, ok in verdict.boundary:
            record(f"ratio.{name}.{label}", ok, value, "boundary value")

    deviations = [abs(w_bound(x) / v_bound(x) - 1.0) for x in (4.0, 6.0, 8.0, 10.0)]
    shrinking = all(a > b for a, b in zip(deviations, deviations[1:]))
    record("asymptotic.w_over_v", deviations[-1] <= 0.01 and shrinking, 1.0 + deviations[-1],
           "|W(10)/V(10) - 1| <= 0.01, decreasing along 4, 6, 8, 10")
    return rows


def cmd_selfcheck(args):
    rows = selfcheck_rows(args.lambda_shift)
    _emit(write_table(["status", "check", "value", "detail"], rows, args.format), args.out)
    return EXIT_OK if all(r[0] == "PASS" for r in rows) else EXIT_VIOLATION


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tailbound",
        description="Sharp Gaussian-shift tail bounds for sums of bounded random variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=True):
        if grid:
            p.add_argument("--x", help="comma-separated evaluation points")
            p.add_argument("--grid", help=f"start:stop:points:lin|log (default {DEFAULT_GRID})")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", help="output path (default: stdout)")
        return p

    p = common(sub.add_parser("eval", help="evaluate bounds"))
    p.add_argument("--bounds", help="comma list of " + ",".join(k.value for k in BOUND_ORDER))
    p.add_argument("--strict", action="store_true", help="reject x <= 0")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("table", help="all bounds and W/V on a grid"))
    p.add_argument("--strict", action="store_true", help="reject x <= 0")
    p.set_defaults(func=cmd_table)

    p = common(sub.add_parser("crossings", help="branch crossing points"), grid=False)
    p.set_defaults(func=cmd_crossings)

    p = common(sub.add_parser("verify-exact", help="exact tails vs bounds"))
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--bounds")
    p.add_argument("--recheck", metavar="REPORT", help="recheck flags of a saved report")
    p.set_defaults(func=cmd_verify_exact)

    p = common(sub.add_parser("verify-mc", help="Monte Carlo tails vs bounds"))
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--bounds")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_mc)

    p = common(sub.add_parser("selfcheck", help="internal consistency checks"), grid=False)
    p.add_argument("--lambda-shift", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TailboundError as exc:
        print(f"tailbound {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
