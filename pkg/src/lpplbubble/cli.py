"""Command-line front end: ``lpplbubble {fit,scan,sim,bayes,residual-test}``.

Settings resolve as command-line flag, then ``--config`` JSON file (keys are
the long flag names with dashes or underscores), then the built-in defaults
shown by ``--help``.

Exit codes: 0 success, 2 input error, 3 fit failure. Errors are written to
stderr as one JSON object ``{"error": ..., "message": ..., "exit_code": ...}``.

Every JSON output embeds a ``manifest`` (command, resolved config, input
hashes, seed, tool version) without a timestamp, so identical runs produce
identical bytes. A sidecar ``<out>.manifest.json`` adds the timestamp.

Seed tree, all rooted at ``--seed``:

* ``sim``/``scan --mode garch``: ``SeedSequence(seed).spawn(2)`` gives a
  length stream and a path parent; path k uses ``parent.spawn(count)[k]``.
  The same seed therefore yields the same paths in both commands.
* ``bayes``: repetition k of every model uses
  ``SeedSequence(seed).spawn(reps)[k]``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import MODELS, EvidenceError, PriorSpec, log_bayes_factor, log_marginal_likelihood
from .calibration import MIN_FIT_LENGTH, FitConfig, FitError, fit_lppl
from .lppl import PAPER_GARCH, GarchParams, LpplParams, OuResidualParams, lppl_h, simulate_bubble, simulate_garch
from .scanner import (
    ScanReport,
    analyse_window,
    garch_ensemble,
    shrinking_scan,
    sliding_scan,
)
from .stationarity import CRITICAL_VALUES, StationarityError, pacf, residual_diagnostics
from .timeseries import IngestError, ingest_csv, write_csv

SCHEMA_VERSION = 1
EXIT_INPUT, EXIT_FIT = 2, 3

DEFAULTS = {
    "common": {"seed": 0, "threads": None, "price_column": "close", "transform": "log", "date_column": "date"},
    "fit": {"tc_max": 252, "optimizer": "simplex", "max_iterations": 3000, "pacf_lags": 20, "max_order": 5},
    "scan": {"mode": "sliding", "window": 750, "step": None, "min_length": 750, "levels": "0.001,0.01",
             "tc_max": 252, "count": 200, "length_range": "750,1500", "length": None},
    "sim": {"model": "garch", "length": 1000, "count": 1, "ln_i0": 0.0, "start_date": "2000-01-03",
            "mu0": PAPER_GARCH.mu0, "sigma0_sq": PAPER_GARCH.sigma0_sq, "arch": PAPER_GARCH.arch,
            "garch": PAPER_GARCH.garch, "df": PAPER_GARCH.student_df,
            "A": 7.2, "B": 0.0833, "C": 0.782, "beta": 0.3795, "omega": 6.3787, "phi": 4.3364,
            "tc_beyond_end": 50.0, "alpha": 0.03, "sigma_u": 0.008, "write_log": False},
    "bayes": {"models": "bs,pl,lppl", "samples": 10_000, "reps": 100, "a_prior": "variance"},
    "residual-test": {"column": "nu", "pacf_lags": 20, "max_order": 5, "levels": "0.001,0.01,0.05"},
}
STEP_DEFAULT = {"sliding": 25, "shrinking": 5}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT, kind="InputError"):
        super().__init__(message)
        self.code, self.kind = code, kind


# --- plumbing ------------------------------------------------------------------


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve(args, command):
    """Fill unset flags from the config file, then from DEFAULTS."""
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}")
    resolved = {}
    for key, default in {**DEFAULTS["common"], **DEFAULTS[command]}.items():
        value = getattr(args, key, None)
        if value is None:
            value = cfg.get(key, default)
        setattr(args, key, value)
        resolved[key] = value
    return resolved


def _manifest(command, config, inputs, seed):
    return {
        "command": command,
        "config": config,
        "inputs": {str(p): _hash_file(p) for p in inputs},
        "seed": seed,
        "tool_version": __version__,
        "schema_version": SCHEMA_VERSION,
    }


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _write_outputs(out, suffix, payload, manifest):
    """Write ``<out>.<suffix>.json`` with the manifest embedded, plus the sidecar."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    main = out.with_name(out.name + f".{suffix}.json")
    _write_json(main, {"manifest": manifest, **payload})
    stamp = dict(manifest, timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
                 outputs=[main.name])
    _write_json(out.with_name(out.name + ".manifest.json"), stamp)
    return main


def _load_series(args):
    try:
        s = ingest_csv(args.input, args.price_column, args.transform, args.date_column)
        if getattr(args, "date_from", None) or getattr(args, "date_to", None):
            s = s.between(args.date_from, args.date_to)
    except IngestError as exc:
        raise CliError(str(exc), kind="IngestError")
    except ValueError as exc:
        raise CliError(f"bad date range: {exc}", kind="IngestError")
    return s


def _levels(text):
    try:
        levels = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise CliError(f"bad --levels {text!r}")
    bad = [x for x in levels if x not in CRITICAL_VALUES]
    if bad:
        raise CliError(f"levels must be among {sorted(CRITICAL_VALUES)}, got {bad}")
    return levels


def _default_out(args, stem):
    if args.out:
        return args.out
    return str(Path(args.input).with_suffix("")) if getattr(args, "input", None) else stem


# --- commands ------------------------------------------------------------------


def cmd_fit(args):
    config = _resolve(args, "fit")
    series = _load_series(args)
    if len(series) < MIN_FIT_LENGTH:
        raise CliError(f"need at least {MIN_FIT_LENGTH} observations, got {len(series)}")
    fc = FitConfig(tc_max_beyond_end=args.tc_max, local_optimizer=args.optimizer,
                   max_iterations=args.max_iterations)
    try:
        fit = fit_lppl(series, fc)
    except FitError as exc:
        raise CliError(str(exc), code=EXIT_FIT, kind=type(exc).__name__)
    try:
        diag = residual_diagnostics(fit.residuals, args.pacf_lags, args.max_order)
    except StationarityError as exc:
        diag = {"error": str(exc)}
    config.update(date_from=args.date_from, date_to=args.date_to, fit_config=fc.as_dict())
    manifest = _manifest("fit", config, [args.input], None)
    payload = {
        "series": {"fingerprint": series.fingerprint(), "length": len(series),
                   "start_date": str(series.dates[0]), "end_date": str(series.dates[-1])},
        "fit": fit.to_dict(),
        "t_c_date": str(series.date_after(fit.params.t_c - series.last_index)),
        "diagnostics": diag,
    }
    out = _default_out(args, "fit")
    path = _write_outputs(out, "fit", payload, manifest)
    if args.plot_data:
        _write_plot_data(Path(str(out) + ".plotdata.csv"), series, fit, args.pacf_lags)
    return {"written": str(path), "qualified": fit.qualified}


def _write_plot_data(path, series, fit, lags):
    """Columns: trajectory panel, residual panel and the PACF table side by side."""
    h = lppl_h(fit.params, series.index)
    try:
        p = pacf(fit.residuals, lags)
        values, band = p.values, p.band
    except StationarityError:
        values, band = [], None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "date", "ln_I", "H", "nu", "pacf_lag", "pacf_value", "pacf_band"])
        for i in range(len(series)):
            row = [i, str(series.dates[i]), repr(float(series.log_price[i])), repr(float(h[i])),
                   repr(float(fit.residuals[i]))]
            row += [i + 1, repr(float(values[i])), repr(band)] if i < len(values) else ["", "", ""]
            w.writerow(row)


def cmd_scan(args):
    config = _resolve(args, "scan")
    levels = _levels(args.levels)
    fc = FitConfig(tc_max_beyond_end=args.tc_max)
    step = args.step if args.step is not None else STEP_DEFAULT.get(args.mode, 25)
    config["step"] = step
    inputs = list(args.input or [])
    if args.mode in ("sliding", "shrinking"):
        if len(inputs) != 1:
            raise CliError(f"--mode {args.mode} takes exactly one --input")
        args.input = inputs[0]
        series = _load_series(args)
        if args.mode == "sliding":
            if len(series) < args.window:
                raise CliError(f"series of length {len(series)} is shorter than the window {args.window}")
            report = sliding_scan(series, args.window, step, fc, levels, workers=args.threads)
        else:
            end = series.last_index if args.end is None else _index_of(series, args.end)
            first = 0 if args.start is None else _index_of(series, args.start)
            groups = None if not args.groups else [_index_of(series, d) for d in args.groups.split(",")]
            try:
                report = shrinking_scan(series, end, step, args.min_length, fc, levels, groups, first,
                                        workers=args.threads)
            except ValueError as exc:
                raise CliError(str(exc))
        config.update(date_from=args.date_from, date_to=args.date_to, end=args.end, start=args.start,
                      groups=args.groups)
    elif args.mode == "files":
        if not inputs:
            raise CliError("--mode files needs at least one --input")
        verdicts = []
        for k, path in enumerate(inputs):
            args.input = path
            v = analyse_window(_load_series(args), fc, levels, k, 0)
            v.path_length = v.length
            verdicts.append(v)
        report = ScanReport("files", verdicts, levels, {"fit_config": fc.as_dict(), "files": inputs})
        args.input = inputs[0]
    elif args.mode == "garch":
        spec = int(args.length) if args.length is not None else [int(x) for x in str(args.length_range).split(",")]
        try:
            report = garch_ensemble(PAPER_GARCH, args.count, spec, fc, args.seed, levels, workers=args.threads)
        except ValueError as exc:
            raise CliError(str(exc))
        inputs = []
    else:
        raise CliError(f"unknown mode {args.mode!r}")
    manifest = _manifest("scan", config, inputs, args.seed if args.mode == "garch" else None)
    out = args.out or (str(Path(inputs[0]).with_suffix("")) if inputs else "scan")
    path = _write_outputs(out, "scan", report.to_dict(), manifest)
    report.write_csv(Path(str(out) + ".scan.csv"))
    return {"written": str(path), "p_lppl": report.p_lppl, "windows": len(report.verdicts)}


def _index_of(series, date):
    try:
        return series.index_of(date)
    except (IngestError, ValueError, KeyError) as exc:
        raise CliError(f"date {date!r} not in series: {exc}")


def cmd_sim(args):
    config = _resolve(args, "sim")
    try:
        if args.count < 1:
            raise CliError("--count must be >= 1")
        # same tree as ensemble_lengths with a fixed length
        seeds = np.random.SeedSequence(args.seed).spawn(2)[1].spawn(args.count)
        lengths = [args.length] * args.count
        if args.model == "garch":
            params = GarchParams(args.mu0, args.sigma0_sq, args.arch, args.garch, args.df)
            make = lambda n, ss: simulate_garch(params, n, args.ln_i0, ss, args.start_date)
        elif args.model == "bubble":
            lp = LpplParams(args.A, args.B, args.C, args.beta, args.omega, args.phi,
                            args.length - 1 + args.tc_beyond_end)
            resid = OuResidualParams(args.alpha, args.sigma_u)
            make = lambda n, ss: simulate_bubble(lp, resid, n, float(lppl_h(lp, 0)), ss, args.start_date)
        else:
            raise CliError(f"unknown model {args.model!r}")
    except ValueError as exc:
        raise CliError(str(exc))
    out = Path(args.out or f"{args.model}")
    out.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(args.count):
        s = make(lengths[k], seeds[k])
        path = out.with_name(f"{out.name}_{k:04d}.csv")
        if args.write_log:
            write_csv(s, path, price_column="log_close", transform="as-is")
        else:
            write_csv(s, path)
        written.append(path)
    manifest = _manifest("sim", config, [], args.seed)
    manifest["outputs"] = {p.name: _hash_file(p) for p in written}
    _write_json(out.with_name(out.name + ".manifest.json"),
                dict(manifest, timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds")))
    return {"written": [str(p) for p in written]}


def cmd_bayes(args):
    if args.write_default_priors:
        _write_json(args.write_default_priors, PriorSpec.paper(args.a_prior or "variance").to_dict())
        return {"written": args.write_default_priors}
    config = _resolve(args, "bayes")
    if not args.input:
        raise CliError("--input is required")
    series = _load_series(args)
    inputs = [args.input]
    try:
        priors = PriorSpec.paper(args.a_prior)
        if args.priors:
            with open(args.priors, encoding="utf-8") as fh:
                priors = PriorSpec.from_dict(json.load(fh))
            inputs.append(args.priors)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad priors: {exc}")
    models = [m.strip().upper() for m in str(args.models).split(",") if m.strip()]
    if not models or any(m not in MODELS for m in models):
        raise CliError(f"--models must be drawn from {','.join(MODELS).lower()}")
    evidence = {}
    try:
        for m in models:
            evidence[m] = log_marginal_likelihood(m, series, priors, args.samples, args.reps, args.seed,
                                                  workers=args.threads)
    except EvidenceError as exc:
        raise CliError(str(exc), code=EXIT_FIT, kind="EvidenceError")
    except ValueError as exc:
        raise CliError(str(exc))
    factors = {f"{a}_vs_{b}": log_bayes_factor(evidence[a], evidence[b])
               for a in models for b in models if a != b}
    config.update(date_from=args.date_from, date_to=args.date_to, priors_resolved=priors.to_dict())
    manifest = _manifest("bayes", config, inputs, args.seed)
    payload = {"evidence": {m: e.as_dict() for m, e in evidence.items()}, "log_bayes_factors": factors}
    path = _write_outputs(_default_out(args, "bayes"), "bayes", payload, manifest)
    return {"written": str(path), "mean_log_ml": {m: e.mean for m, e in evidence.items()}}


def cmd_residual_test(args):
    config = _resolve(args, "residual-test")
    levels = _levels(args.levels)
    values = []
    try:
        with open(args.input, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or args.column not in reader.fieldnames:
                raise CliError(f"{args.input}: missing column {args.column!r}")
            for lineno, rec in enumerate(reader, start=2):
                try:
                    values.append(float(rec[args.column]))
                except (TypeError, ValueError):
                    raise CliError(f"{args.input}: row {lineno}: cannot parse {rec[args.column]!r}")
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}")
    resid = np.asarray(values)
    try:
        diag = residual_diagnostics(resid, args.pacf_lags, args.max_order)
    except StationarityError as exc:
        raise CliError(str(exc), kind="StationarityError")
    cvs = {str(k): CRITICAL_VALUES[k] for k in levels}
    for key in ("dickey_fuller", "phillips_perron"):
        diag[key]["critical_values"] = cvs
        diag[key]["reject"] = {k: diag[key]["statistic"] < v for k, v in cvs.items()}
    manifest = _manifest("residual-test", config, [args.input], None)
    path = _write_outputs(_default_out(args, "residuals"), "residuals", {"diagnostics": diag}, manifest)
    return {"written": str(path)}


# --- parser --------------------------------------------------------------------


def _d(command, key):
    v = {**DEFAULTS["common"], **DEFAULTS[command]}[key]
    return f" (default: {v})"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lpplbubble", description="LPPL bubble diagnostics.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, command, needs_input=True):
        sp.add_argument("--config", help="JSON file of flag values (flags override it)")
        sp.add_argument("--seed", type=int, help="root seed" + _d(command, "seed"))
        sp.add_argument("--threads", type=int, help="worker bound (default: CPU count, at most 8)")
        sp.add_argument("--out", help="output path prefix (default: input path without suffix)")
        if needs_input:
            sp.add_argument("--input", required=command != "bayes", help="price CSV")
            sp.add_argument("--price-column", help="value column" + _d(command, "price_column"))
            sp.add_argument("--date-column", help="date column" + _d(command, "date_column"))
            sp.add_argument("--transform", choices=["log", "as-is"], help="value transform" + _d(command, "transform"))
            sp.add_argument("--from", dest="date_from", help="first date kept (ISO)")
            sp.add_argument("--to", dest="date_to", help="last date kept (ISO)")

    f = sub.add_parser("fit", help="calibrate one window and test its residuals")
    common(f, "fit")
    f.add_argument("--tc-max", type=int, help="t_c horizon in trading days" + _d("fit", "tc_max"))
    f.add_argument("--optimizer", choices=["simplex", "gradient-based"], help="local optimizer" + _d("fit", "optimizer"))
    f.add_argument("--max-iterations", type=int, help="per-start iteration cap" + _d("fit", "max_iterations"))
    f.add_argument("--pacf-lags", type=int, help="PACF lags" + _d("fit", "pacf_lags"))
    f.add_argument("--max-order", type=int, help="largest AR order searched" + _d("fit", "max_order"))
    f.add_argument("--plot-data", action="store_true", help="also write <out>.plotdata.csv")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("scan", help="sliding, shrinking, per-file or GARCH-ensemble scans")
    common(s, "scan", needs_input=False)
    s.add_argument("--input", nargs="+", help="price CSV (several for --mode files)")
    s.add_argument("--price-column", help="value column" + _d("scan", "price_column"))
    s.add_argument("--date-column", help="date column" + _d("scan", "date_column"))
    s.add_argument("--transform", choices=["log", "as-is"], help="value transform" + _d("scan", "transform"))
    s.add_argument("--from", dest="date_from", help="first date kept (ISO)")
    s.add_argument("--to", dest="date_to", help="last date kept (ISO)")
    s.add_argument("--mode", choices=["sliding", "shrinking", "files", "garch"], help="scan type" + _d("scan", "mode"))
    s.add_argument("--window", type=int, help="sliding window length" + _d("scan", "window"))
    s.add_argument("--step", type=int, help="window step (default: 25 sliding, 5 shrinking)")
    s.add_argument("--min-length", type=int, help="shortest shrinking window" + _d("scan", "min_length"))
    s.add_argument("--end", help="shrinking scans: fixed last date (default: last row)")
    s.add_argument("--start", help="shrinking scans: first start date (default: first row)")
    s.add_argument("--groups", help="shrinking scans: comma-separated group start dates")
    s.add_argument("--levels", help="significance levels" + _d("scan", "levels"))
    s.add_argument("--tc-max", type=int, help="t_c horizon in trading days" + _d("scan", "tc_max"))
    s.add_argument("--count", type=int, help="GARCH paths" + _d("scan", "count"))
    s.add_argument("--length-range", help="GARCH length range lo,hi" + _d("scan", "length_range"))
    s.add_argument("--length", type=int, help="fixed GARCH length (overrides --length-range)")
    s.set_defaults(func=cmd_scan)

    m = sub.add_parser("sim", help="write simulated GARCH or bubble series")
    common(m, "sim", needs_input=False)
    m.add_argument("--model", choices=["garch", "bubble"], help="generator" + _d("sim", "model"))
    m.add_argument("--length", type=int, help="days per path" + _d("sim", "length"))
    m.add_argument("--count", type=int, help="number of paths" + _d("sim", "count"))
    m.add_argument("--ln-i0", type=float, help="GARCH starting log price" + _d("sim", "ln_i0"))
    m.add_argument("--start-date", help="first calendar date" + _d("sim", "start_date"))
    for k in ("mu0", "sigma0_sq", "arch", "garch"):
        m.add_argument("--" + k.replace("_", "-"), type=float, help=f"GARCH {k}" + _d("sim", k))
    m.add_argument("--df", type=float, help="Student-t degrees of freedom" + _d("sim", "df"))
    for k in ("A", "B", "C", "beta", "omega", "phi"):
        m.add_argument("--" + k, type=float, help=f"bubble {k}" + _d("sim", k))
    m.add_argument("--tc-beyond-end", type=float, help="t_c minus the last index" + _d("sim", "tc_beyond_end"))
    m.add_argument("--alpha", type=float, help="mean-reversion strength" + _d("sim", "alpha"))
    m.add_argument("--sigma-u", type=float, help="residual shock sd" + _d("sim", "sigma_u"))
    m.add_argument("--write-log", action="store_const", const=True,
                   help="write a log_close column as-is instead of prices")
    m.set_defaults(func=cmd_sim)

    b = sub.add_parser("bayes", help="Monte-Carlo evidence for BS / PL / LPPL")
    common(b, "bayes")
    b.add_argument("--models", help="comma-separated models" + _d("bayes", "models"))
    b.add_argument("--priors", help="prior JSON (see --write-default-priors)")
    b.add_argument("--samples", type=int, help="prior draws per repetition" + _d("bayes", "samples"))
    b.add_argument("--reps", type=int, help="repetitions" + _d("bayes", "reps"))
    b.add_argument("--a-prior", choices=["variance", "sd"], help="reading of the A prior's 0.05" + _d("bayes", "a_prior"))
    b.add_argument("--write-default-priors", metavar="PATH", help="write the default priors and exit")
    b.set_defaults(func=cmd_bayes)

    r = sub.add_parser("residual-test", help="unit-root, AR(1), PACF and AR-order tests on a residual column")
    common(r, "residual-test", needs_input=False)
    r.add_argument("--input", required=True, help="CSV holding the residual column")
    r.add_argument("--column", help="residual column" + _d("residual-test", "column"))
    r.add_argument("--levels", help="significance levels" + _d("residual-test", "levels"))
    r.add_argument("--pacf-lags", type=int, help="PACF lags" + _d("residual-test", "pacf_lags"))
    r.add_argument("--max-order", type=int, help="largest AR order searched" + _d("residual-test", "max_order"))
    r.set_defaults(func=cmd_residual_test)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": exc.code}), file=sys.stderr)
        return exc.code
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
