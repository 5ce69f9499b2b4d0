"""Command-line interface: ingest delimited data, run analyses and simulation studies.

Exit codes: 0 success, 2 input or configuration error, 3 degenerate design,
4 weak instrument.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .errors import InputError, SharpBoundsError
from .estimate import LOWER_FAMILIES, analyze_ate, merge_sparse_strata
from .late import LATE_FAMILIES, analyze_late, lambda_ok
from .population import ObservedSample, sample_diagnostics, stratify_numeric
from .simulate import EXAMPLE1_FAMILIES, StudyConfig, example1_curves, run_study

THREADS_ENV = "SHARPBOUNDS_THREADS"
SCALE_NOTE = "values are in squared units of the outcome column; no rescaling applied"


@dataclass(frozen=True)
class DatasetSchema:
    treatment: str
    outcome: str
    takeup: str | None = None
    covariates: tuple = ()
    bins: dict | None = None  # column -> ("edges", [...]) | ("quantile", q) | ("auto", None)
    delimiter: str = ","
    header: bool = True
    population_size: int | None = None


def _parse_bins(items) -> dict:
    out = {}
    for item in items or ():
        col, sep, spec = item.partition(":")
        if not sep or not col or not spec:
            raise InputError(f"--bins expects column:edges, column:qN or column:auto, got {item!r}")
        if spec == "auto":
            out[col] = ("auto", None)
        elif spec[0] in "qQ" and spec[1:].isdigit():
            out[col] = ("quantile", int(spec[1:]))
        else:
            try:
                out[col] = ("edges", [float(v) for v in spec.split(",")])
            except ValueError:
                raise InputError(f"bad bin edges {spec!r} for column {col!r}") from None
    return out


def _binary(raw: str, row: int, col: str) -> int:
    v = raw.strip()
    try:
        x = float(v)
    except ValueError:
        x = None
    if x not in (0.0, 1.0):
        raise InputError(f"row {row}, column {col!r}: expected 0 or 1, got {raw!r}")
    return int(x)


def _categorical_key(raw: str):
    v = raw.strip()
    try:
        return int(v)
    except ValueError:
        pass
    try:
        x = float(v)
    except ValueError:
        return v
    return int(x) if x.is_integer() else x


def _bin_column(values: list[float], directive) -> np.ndarray:
    kind, arg = directive
    x = np.asarray(values, dtype=float)
    if kind == "edges":
        return stratify_numeric(x, edges=arg)
    if kind == "auto":
        arg = max(1, int(math.floor(x.size ** 0.25)))
    return stratify_numeric(x, bins=arg, scheme="quantile")


def read_table(source, delimiter: str = ",", header: bool = True):
    """(column names, rows) from a path or text stream; headerless columns are named 1, 2, ..."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source, newline="", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc.strerror}") from None
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if r]
    if not rows:
        raise InputError("input has no rows")
    if header:
        names, rows = [c.strip() for c in rows[0]], rows[1:]
    else:
        names = [str(i + 1) for i in range(len(rows[0]))]
    for i, r in enumerate(rows):
        if len(r) != len(names):
            raise InputError(f"row {i + 1}: expected {len(names)} fields, found {len(r)}")
    return names, rows


def ingest(source, schema: DatasetSchema) -> ObservedSample:
    """Validated sample from delimited text; rows are numbered from 1 after the header."""
    names, rows = read_table(source, schema.delimiter, schema.header)
    needed = [schema.treatment, schema.outcome, *schema.covariates]
    if schema.takeup:
        needed.append(schema.takeup)
    missing = [c for c in needed if c not in names]
    if missing:
        raise InputError(f"missing columns {missing}; available: {names}")
    idx = {c: names.index(c) for c in needed}
    if not rows:
        raise InputError("input has a header but no data rows")

    def cell(r, col, i):
        v = r[idx[col]].strip()
        if v == "" or v.upper() in ("NA", "NAN"):
            raise InputError(f"row {i}, column {col!r}: missing value")
        return v

    t, y, d = [], [], []
    cols = {c: [] for c in schema.covariates}
    for i, r in enumerate(rows, start=1):
        t.append(_binary(cell(r, schema.treatment, i), i, schema.treatment))
        try:
            y.append(float(cell(r, schema.outcome, i)))
        except ValueError:
            raise InputError(f"row {i}, column {schema.outcome!r}: not a number: "
                             f"{r[idx[schema.outcome]]!r}") from None
        if not math.isfinite(y[-1]):
            raise InputError(f"row {i}, column {schema.outcome!r}: non-finite value")
        if schema.takeup:
            d.append(_binary(cell(r, schema.takeup, i), i, schema.takeup))
        for c in schema.covariates:
            cols[c].append(cell(r, c, i))

    bins = schema.bins or {}
    unknown = set(bins) - set(schema.covariates)
    if unknown:
        raise InputError(f"--bins given for non-covariate columns {sorted(unknown)}")
    parts = []
    for c in schema.covariates:
        if c in bins:
            try:
                vals = [float(v) for v in cols[c]]
            except ValueError:
                raise InputError(f"column {c!r} has non-numeric values but a binning directive") from None
            parts.append([int(b) for b in _bin_column(vals, bins[c])])
        else:
            keys = [_categorical_key(v) for v in cols[c]]
            if any(isinstance(k, float) for k in keys):
                raise InputError(f"column {c!r} is continuous; give a binning directive (--bins {c}:...)")
            parts.append(keys)

    if not parts:
        w, labels = [1] * len(t), None
    else:
        keys = list(zip(*parts))
        distinct = sorted(set(keys), key=lambda k: tuple((isinstance(v, str), v) for v in k))
        if len(parts) == 1:
            w, labels = [k[0] for k in keys], [k[0] for k in distinct]
        else:
            fmt = lambda k: "|".join(str(v) for v in k)  # noqa: E731
            w, labels = [fmt(k) for k in keys], [fmt(k) for k in distinct]
    return ObservedSample.build(t, y, w, d if schema.takeup else None, labels,
                                schema.population_size)


def emit_sample(s: ObservedSample, stream, delimiter: str = ",") -> None:
    """Canonical CSV: columns t, y, [d,] w with shortest round-tripping floats."""
    out = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    out.writerow(["t", "y", "d", "w"] if s.d is not None else ["t", "y", "w"])
    for i in range(s.n):
        row = [int(s.t[i]), repr(float(s.y[i]))]
        if s.d is not None:
            row.append(int(s.d[i]))
        row.append(s.labels[s.w[i]])
        out.writerow(row)


def canonical_schema(s: ObservedSample) -> DatasetSchema:
    return DatasetSchema("t", "y", "d" if s.d is not None else None, ("w",))


# ---------------------------------------------------------------- output


def _num(x, digits: int):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{digits}g}")
    return x


def _round(doc, digits: int):
    if isinstance(doc, dict):
        return {str(k): _round(v, digits) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_round(v, digits) for v in doc]
    return _num(doc, digits)


def _flatten(doc, prefix=""):
    if isinstance(doc, dict):
        for k, v in doc.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(doc, list) and any(isinstance(v, (dict, list)) for v in doc):
        for i, v in enumerate(doc):
            yield from _flatten(v, f"{prefix}.{i}")
    elif isinstance(doc, list):
        yield prefix, ";".join(str(v) for v in doc)
    else:
        yield prefix, doc


def render(doc, fmt: str, precision: int | None = None) -> str:
    """JSON (17 significant digits by default) or a two-column field/value table."""
    if fmt == "json":
        return json.dumps(_round(doc, precision or 17), indent=2) + "\n"
    buf = io.StringIO()
    out = csv.writer(buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")
    out.writerow(["field", "value"])
    for k, v in _flatten(_round(doc, precision or 6)):
        out.writerow([k, "" if v is None else v])
    return buf.getvalue()


def render_rows(rows: list[dict], fmt: str, precision: int | None = None) -> str:
    if fmt == "json":
        return json.dumps(_round(rows, precision or 17), indent=2) + "\n"
    buf = io.StringIO()
    out = csv.DictWriter(buf, fieldnames=list(rows[0]), delimiter="," if fmt == "csv" else "\t",
                         lineterminator="\n")
    out.writeheader()
    out.writerows(_round(rows, precision or 6))
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _families(arg: str | None, allowed: tuple) -> tuple:
    if not arg:
        return allowed
    fams = tuple(f.strip() for f in arg.split(",") if f.strip())
    bad = [f for f in fams if f not in allowed]
    if bad or not fams:
        raise InputError(f"unknown families {bad}; choose from {', '.join(allowed)}")
    return fams


def _schema(args, need_takeup: bool) -> DatasetSchema:
    if need_takeup and not args.takeup:
        raise InputError("this command needs a take-up column (--takeup)")
    delim = args.delimiter
    if delim is None:
        delim = "\t" if str(args.data).endswith((".tsv", ".tab")) else ","
    covs = tuple(c.strip() for c in (args.covariates or "").split(",") if c.strip())
    return DatasetSchema(args.treatment, args.outcome, args.takeup if need_takeup else None, covs,
                         _parse_bins(args.bins), delim, not args.no_header, args.population_size)


def _load(args, need_takeup: bool) -> ObservedSample:
    source = sys.stdin if args.data == "-" else args.data
    return ingest(source, _schema(args, need_takeup))


def _sample_header(s: ObservedSample, merged: bool) -> dict:
    return {
        "n": s.n, "N": s.N, "n1": s.n1, "n0": s.n0, "K": s.K,
        "strata": [str(k) for k in s.labels],
        "merged_strata": merged,
        "scale_note": SCALE_NOTE,
    }


def cmd_bounds(args) -> dict:
    s = _load(args, False)
    merged = s
    if args.merge_sparse_strata:
        merged = merge_sparse_strata(s)
    res = analyze_ate(merged, args.alpha, ("sharp", "aronow", "ding"))
    doc = {"command": "bounds", **_sample_header(merged, merged.K != s.K),
           "theta_hat": res.theta_hat,
           "bounds": {f: {"lower": b.lower, "upper": b.upper} for f, b in res.bound_estimates.items()},
           "diagnostics": sample_diagnostics(merged)}
    return doc


def cmd_ci(args) -> dict:
    fams = _families(args.families, LOWER_FAMILIES)
    s = _load(args, False)
    merged = merge_sparse_strata(s) if args.merge_sparse_strata else s
    res = analyze_ate(merged, args.alpha, tuple(dict.fromkeys(fams + ("sharp", "aronow", "ding"))))
    return {
        "command": "ci", **_sample_header(merged, merged.K != s.K),
        "alpha": args.alpha,
        "theta_hat": res.theta_hat,
        "phi2_arm": {"treatment": res.phi2_arm[0], "control": res.phi2_arm[1]},
        "bounds": {f: {"lower": b.lower, "upper": b.upper} for f, b in res.bound_estimates.items()},
        "sigma_hat2": {f: res.sigma_hat2[f] for f in fams},
        "sigma_hat2_raw": {f: res.sigma_hat2_raw[f] for f in fams},
        "clamped": {f: res.clamped[f] for f in fams},
        "ci": {f: {"lower": res.ci[f].lower, "upper": res.ci[f].upper, "width": res.ci[f].width}
               for f in fams},
        "diagnostics": sample_diagnostics(merged),
    }


def cmd_late(args) -> dict:
    fams = _families(args.families, LATE_FAMILIES)
    s = _load(args, True)
    merged = s
    if args.merge_sparse_strata:
        def ok(smp, k):
            m = smp.w == k
            return bool(np.any(m & (smp.t == 1)) and np.any(m & (smp.t == 0))) and lambda_ok(smp, k)
        merged = merge_sparse_strata(s, ok)
    res = analyze_late(merged, args.alpha,
                       tuple(dict.fromkeys(fams + ("sharp-late", "sharp-late-nocov"))))
    return {
        "command": "late", **_sample_header(merged, merged.K != s.K),
        "alpha": args.alpha,
        "theta_c_hat": res.theta_c_hat,
        "pi_c_hat": res.pi_c_hat,
        "phi2_check_arm": {"treatment": res.phi2_check_arm[0], "control": res.phi2_check_arm[1]},
        "lambda": {str(k): {"lambda1": v[0], "lambda0": v[1]} for k, v in res.lambdas.items()},
        "bounds": {f: {"lower": b.lower, "upper": b.upper} for f, b in res.bound_estimates.items()},
        "sigma_c_hat2": {f: res.sigma_c_hat2[f] for f in fams},
        "sigma_c_hat2_raw": {f: res.sigma_c_hat2_raw[f] for f in fams},
        "clamped": {f: res.clamped[f] for f in fams},
        "ci": {f: {"lower": res.ci[f].lower, "upper": res.ci[f].upper, "width": res.ci[f].width}
               for f in fams},
        "p_value_less": {f: res.p_value_less[f] for f in fams},
        "diagnostics": sample_diagnostics(merged),
    }


def load_study_configs(path) -> list[StudyConfig]:
    """One study object or ``{"studies": [...]}`` from a JSON document."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(doc, dict) and "studies" in doc:
        doc = doc["studies"]
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list) or not doc or not all(isinstance(d, dict) for d in doc):
        raise InputError("configuration must be a study object or a non-empty list of them")
    return [StudyConfig.from_dict(d) for d in doc]


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return None


def cmd_simulate(args) -> dict:
    configs = load_study_configs(args.config)
    threads = _threads(args)
    reports, log = [], []
    for i, cfg in enumerate(configs):
        if threads is not None:
            cfg = StudyConfig.from_dict({**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
                                         "threads": threads})
        rep = run_study(cfg, keep_replications=bool(args.log))
        reports.append(rep.as_dict(include_runtime=args.runtime))
        if args.log:
            for entry in rep.replications:
                for fam, (lo, hi) in entry.get("ci", {}).items():
                    log.append([i, entry["rep"], fam, repr(lo), repr(hi)])
                if "excluded" in entry:
                    log.append([i, entry["rep"], entry["excluded"], "", ""])
    if args.log:
        with open(args.log, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["study", "rep", "family", "ci_lower", "ci_upper"])
            out.writerows(log)
    return {"command": "simulate", "studies": reports}


def example1_rows(long: bool = False) -> list[dict]:
    rows = example1_curves()
    if not long:
        return rows
    return [{"p": r["p"], "family": f, "side": side, "value": r[f"{f}_{side}"]}
            for r in rows for f in EXAMPLE1_FAMILIES for side in ("lower", "upper")]


# ---------------------------------------------------------------- parser


def _add_output(p):
    p.add_argument("--format", choices=("json", "csv", "tsv"), default="json")
    p.add_argument("--precision", type=int, default=None,
                   help="significant digits (default 17 for JSON, 6 for CSV/TSV)")
    p.add_argument("-o", "--output", default=None, help="write to this file instead of stdout")


def _add_data(p, takeup: bool):
    p.add_argument("data", help="delimited text file, or - for stdin")
    p.add_argument("--treatment", default="t", help="0/1 assignment column (default: t)")
    p.add_argument("--outcome", default="y", help="outcome column (default: y)")
    if takeup:
        p.add_argument("--takeup", default="d", help="0/1 treatment-received column (default: d)")
    else:
        p.set_defaults(takeup=None)
    p.add_argument("--covariates", default=None,
                   help="comma-separated stratum columns, cross-classified")
    p.add_argument("--bins", action="append", metavar="COL:SPEC",
                   help="bin a numeric covariate: COL:e1,e2,... (right-closed edges), "
                        "COL:qN (N quantile bins) or COL:auto")
    p.add_argument("--delimiter", default=None, help="field separator (default: by extension)")
    p.add_argument("--no-header", action="store_true", help="columns are referenced as 1, 2, ...")
    p.add_argument("--population-size", type=int, default=None,
                   help="N in the variance formulas when the sample is a subset")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--merge-sparse-strata", action="store_true",
                   help="merge strata that break the estimators into an adjacent stratum")
    p.add_argument("--seed", type=int, default=None, help="reserved; analyses are deterministic")
    _add_output(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharpbounds",
        description="Sharp variance bounds and conservative intervals for randomized experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="plug-in bounds on the effect variance")
    _add_data(p, takeup=False)
    p.set_defaults(func=cmd_bounds, families=None)

    p = sub.add_parser("ci", help="average-effect confidence intervals")
    _add_data(p, takeup=False)
    p.add_argument("--families", default=None, help=f"subset of {','.join(LOWER_FAMILIES)}")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("late", help="complier-effect intervals under noncompliance")
    _add_data(p, takeup=True)
    p.add_argument("--families", default=None, help=f"subset of {','.join(LATE_FAMILIES)}")
    p.set_defaults(func=cmd_late)

    p = sub.add_parser("simulate", help="run Monte Carlo studies from a JSON configuration")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--log", default=None, help="write per-replication intervals to this CSV")
    p.add_argument("--runtime", action="store_true", help="include wall-clock runtime")
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("example1", help="bound curves for the 600-unit binary example")
    p.add_argument("--long", action="store_true", help="one row per (p, family, side)")
    _add_output(p)
    p.set_defaults(func=None)
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "example1":
            _write(render_rows(example1_rows(args.long), args.format, args.precision), args.output)
            return 0
        if not (0 < getattr(args, "alpha", 0.5) < 1):
            raise InputError("--alpha must lie in (0, 1)")
        doc = args.func(args)
        _write(render(doc, args.format, args.precision), args.output)
        return 0
    except SharpBoundsError as exc:
        print(f"sharpbounds: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"sharpbounds: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
