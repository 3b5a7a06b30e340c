"""Window experiments: sliding scans, shrinking scans and GARCH control ensembles.

Every window is fitted once, checked against the LPPL conditions and its
residuals run through the Dickey-Fuller and Phillips-Perron tests, whether
or not it qualifies. Fit failures stay in the report as unqualified windows.

Per-window CSV schema (one row per verdict, stable column order)::

    window_index, start_index, end_index, length, start_date, end_date,
    qualified, error, A, B, C, beta, omega, phi, t_c, sse, alpha_hat,
    df_statistic, pp_statistic, df_reject_<level>..., pp_reject_<level>...,
    path_length

``end_index`` is inclusive. Empty cells mean "not available" (no fit, or
no residual test). Reject columns hold 0/1.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibration import FitConfig, FitError, fit_lppl
from .lppl import GarchParams, make_rng, simulate_garch
from .stationarity import CRITICAL_VALUES, StationarityError, dickey_fuller, estimate_ar1, phillips_perron
from .timeseries import PriceSeries, Window, slice_series

__all__ = [
    "DEFAULT_LEVELS",
    "MIN_ENSEMBLE_LENGTH",
    "WindowVerdict",
    "ScanReport",
    "analyse_window",
    "sliding_windows",
    "shrinking_windows",
    "sliding_scan",
    "shrinking_scan",
    "garch_ensemble",
    "ensemble_lengths",
]

DEFAULT_LEVELS = (0.001, 0.01)
MIN_ENSEMBLE_LENGTH = 750
TESTS = ("dickey_fuller", "phillips_perron")


@dataclass
class WindowVerdict:
    window_index: int
    start_index: int
    length: int
    start_date: str
    end_date: str
    qualified: bool
    conditions: dict | None = None
    params: dict | None = None
    sse: float | None = None
    alpha_hat: float | None = None
    df_statistic: float | None = None
    pp_statistic: float | None = None
    df_reject: dict | None = None
    pp_reject: dict | None = None
    error: str | None = None
    path_length: int | None = None

    @property
    def end_index(self) -> int:
        return self.start_index + self.length - 1

    @property
    def tested(self) -> bool:
        return self.df_reject is not None and self.pp_reject is not None

    def rejects(self, level: float) -> bool:
        """Both unit-root nulls rejected at ``level``."""
        return self.tested and self.df_reject[level] and self.pp_reject[level]

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("df_reject", "pp_reject"):
            if d[k] is not None:
                d[k] = {str(lvl): v for lvl, v in d[k].items()}
        d["end_index"] = self.end_index
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WindowVerdict":
        d = dict(d)
        d.pop("end_index", None)
        for k in ("df_reject", "pp_reject"):
            if d.get(k) is not None:
                d[k] = {float(lvl): v for lvl, v in d[k].items()}
        return cls(**d)


def _fraction(num, den) -> float:
    return num / den if den else 0.0


def _aggregate(verdicts, levels) -> dict:
    """Aggregates derived from a verdict list; the single source of truth."""
    n = len(verdicts)
    qualified = [v for v in verdicts if v.qualified]
    tested = [v for v in verdicts if v.tested]
    q_tested = [v for v in qualified if v.tested]
    keys = {"dickey_fuller": "df_reject", "phillips_perron": "pp_reject"}
    non_rejection = {
        test: {lvl: _fraction(sum(not getattr(v, key)[lvl] for v in tested), len(tested)) for lvl in levels}
        for test, key in keys.items()
    }
    conditional = {
        test: {lvl: _fraction(sum(getattr(v, key)[lvl] for v in q_tested), len(q_tested)) for lvl in levels}
        for test, key in keys.items()
    }
    return {
        "n_windows": n,
        "n_qualified": len(qualified),
        "n_failed": sum(v.error is not None for v in verdicts),
        "n_tested": len(tested),
        "p_lppl": _fraction(len(qualified), n),
        # both tests reject, over qualified windows; 0.0 when nothing qualifies
        "p_stationary_given_lppl": {
            lvl: _fraction(sum(v.rejects(lvl) for v in q_tested), len(q_tested)) for lvl in levels
        },
        "non_rejection": non_rejection,
        "rejection_given_lppl": conditional,
        "false_positive_rate": {
            lvl: _fraction(sum(v.rejects(lvl) for v in qualified), n) for lvl in levels
        },
    }


def _level_keys(d):
    if isinstance(d, dict):
        return {(str(k) if isinstance(k, float) else k): _level_keys(v) for k, v in d.items()}
    return d


@dataclass
class ScanReport:
    """Per-window verdicts plus aggregates that always recompute from them.

    ``p_stationary_given_lppl`` maps each significance level to the share of
    qualified windows whose residuals reject both unit-root nulls.
    ``false_positive_rate`` counts windows that qualify *and* reject, over
    all windows (the last column of the GARCH control table).
    """

    kind: str
    verdicts: list
    levels: tuple = DEFAULT_LEVELS
    config: dict = field(default_factory=dict)
    groups: list | None = None

    def __post_init__(self):
        self.levels = tuple(float(x) for x in self.levels)

    @property
    def aggregates(self) -> dict:
        return _aggregate(self.verdicts, self.levels)

    @property
    def p_lppl(self) -> float:
        return self.aggregates["p_lppl"]

    @property
    def p_stationary_given_lppl(self) -> dict:
        return self.aggregates["p_stationary_given_lppl"]

    def non_rejection(self, test: str, level: float) -> float:
        return self.aggregates["non_rejection"][test][level]

    def check_consistency(self, stored: dict | None = None):
        """Recompute every aggregate from the verdicts and compare."""
        fresh = _aggregate(self.verdicts, self.levels)
        if stored is not None and _level_keys(fresh) != _level_keys(stored):
            raise ValueError("stored aggregates disagree with the verdict list")
        if self.groups is not None:
            for g in self.groups:
                members = [v for v in self.verdicts if v.start_index >= g["start_index"]]
                if _group_summary(g["start_index"], g["start_date"], members, self.levels) != g:
                    raise ValueError(f"group starting at {g['start_index']} disagrees with the verdicts")
        return fresh

    def to_dict(self) -> dict:
        agg = self.check_consistency()
        return {
            "kind": self.kind,
            "levels": list(self.levels),
            "config": self.config,
            **_level_keys(agg),
            "groups": _level_keys(self.groups) if self.groups is not None else None,
            "verdicts": [v.as_dict() for v in self.verdicts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanReport":
        verdicts = [WindowVerdict.from_dict(v) for v in d["verdicts"]]
        groups = d.get("groups")
        if groups is not None:
            groups = [{**g, "p_stationary_given_lppl": {float(k): v for k, v in g["p_stationary_given_lppl"].items()}}
                      for g in groups]
        rep = cls(d["kind"], verdicts, tuple(d["levels"]), d.get("config", {}), groups)
        stored = {k: d[k] for k in _aggregate([], rep.levels)}
        rep.check_consistency(stored)
        return rep

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**extra, **self.to_dict()}, indent=2, allow_nan=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def csv_header(self) -> list:
        head = ["window_index", "start_index", "end_index", "length", "start_date", "end_date",
                "qualified", "error", "A", "B", "C", "beta", "omega", "phi", "t_c", "sse",
                "alpha_hat", "df_statistic", "pp_statistic"]
        head += [f"df_reject_{lvl:g}" for lvl in self.levels]
        head += [f"pp_reject_{lvl:g}" for lvl in self.levels]
        return head + ["path_length"]

    def write_csv(self, path):
        self.check_consistency()
        blank = lambda x: "" if x is None else x
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            for v in self.verdicts:
                p = v.params or {}
                row = [v.window_index, v.start_index, v.end_index, v.length, v.start_date, v.end_date,
                       int(v.qualified), blank(v.error)]
                row += [repr(p[k]) if k in p else "" for k in ("A", "B", "C", "beta", "omega", "phi", "t_c")]
                row += [blank(v.sse), blank(v.alpha_hat), blank(v.df_statistic), blank(v.pp_statistic)]
                for rej in (v.df_reject, v.pp_reject):
                    row += ["" if rej is None else int(rej[lvl]) for lvl in self.levels]
                row.append(blank(v.path_length))
                w.writerow(row)


def _critical_values(levels):
    missing = [lvl for lvl in levels if lvl not in CRITICAL_VALUES]
    if missing:
        raise ValueError(f"no critical value tabulated for levels {missing}")
    return {lvl: CRITICAL_VALUES[lvl] for lvl in levels}


def analyse_window(series: PriceSeries, fit_config: FitConfig, levels=DEFAULT_LEVELS,
                   window_index: int = 0, start_index: int = 0) -> WindowVerdict:
    """Fit one window, check the conditions and test its residuals."""
    cvs = _critical_values(levels)
    verdict = WindowVerdict(
        window_index=window_index,
        start_index=start_index,
        length=len(series),
        start_date=str(series.dates[0]),
        end_date=str(series.dates[-1]),
        qualified=False,
    )
    try:
        fit = fit_lppl(series, fit_config)
    except (FitError, ValueError, FloatingPointError) as exc:
        verdict.error = f"{type(exc).__name__}: {exc}"
        return verdict
    verdict.qualified = bool(fit.qualified)
    verdict.conditions = dict(fit.conditions)
    verdict.params = fit.params.as_dict()
    verdict.sse = fit.sse
    try:
        df = dickey_fuller(fit.residuals, critical_values=cvs)
        pp = phillips_perron(fit.residuals, critical_values=cvs)
        verdict.alpha_hat = estimate_ar1(fit.residuals).alpha_hat
    except StationarityError as exc:
        verdict.error = f"{type(exc).__name__}: {exc}"
        return verdict
    verdict.df_statistic, verdict.pp_statistic = df.statistic, pp.statistic
    verdict.df_reject, verdict.pp_reject = df.reject, pp.reject
    return verdict


def _default_workers():
    return min(os.cpu_count() or 1, 8)


def _run(fn, jobs, workers):
    """Map ``fn`` over ``jobs``; results come back in job order."""
    workers = _default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _window_job(series, window, fit_config, levels, k):
    return analyse_window(slice_series(series, window), fit_config, levels, k, window.start_index)


def sliding_windows(n: int, window_length: int, step: int) -> list:
    if step < 1:
        raise ValueError("step must be >= 1")
    if n < window_length:
        raise ValueError(f"series of length {n} is shorter than the window ({window_length})")
    return [Window(s, window_length) for s in range(0, n - window_length + 1, step)]


def shrinking_windows(end_index: int, start_step: int, min_length: int, first_start: int = 0) -> list:
    if start_step < 1:
        raise ValueError("start_step must be >= 1")
    if end_index - first_start + 1 < min_length:
        raise ValueError("no window of the minimum length fits before end_index")
    return [Window(s, end_index - s + 1)
            for s in range(first_start, end_index - min_length + 2, start_step)]


def sliding_scan(series: PriceSeries, window_length: int = 750, step: int = 25,
                 fit_config: FitConfig | None = None, levels=DEFAULT_LEVELS,
                 workers: int | None = None) -> ScanReport:
    """Fixed-length windows at start indices 0, step, 2*step, ..."""
    fit_config = fit_config or FitConfig()
    windows = sliding_windows(len(series), window_length, step)
    jobs = [(series, w, fit_config, tuple(levels), k) for k, w in enumerate(windows)]
    verdicts = _run(_window_job, jobs, workers)
    config = {"window_length": window_length, "step": step, "fit_config": fit_config.as_dict(),
              "series_fingerprint": series.fingerprint()}
    return ScanReport("sliding", verdicts, tuple(levels), config)


def _group_summary(start_index, start_date, members, levels):
    q = [v for v in members if v.qualified and v.tested]
    n_q = sum(v.qualified for v in members)
    return {
        "start_index": start_index,
        "start_date": start_date,
        "n_windows": len(members),
        "n_qualified": n_q,
        "p_lppl": _fraction(n_q, len(members)),
        "p_stationary_given_lppl": {lvl: _fraction(sum(v.rejects(lvl) for v in q), len(q)) for lvl in levels},
    }


def _groups(verdicts, group_starts, levels, series):
    """Cumulative groups: each holds every window starting at or after its boundary."""
    out = []
    for s in group_starts:
        members = [v for v in verdicts if v.start_index >= s]
        if members:
            out.append(_group_summary(int(s), str(series.dates[s]), members, levels))
    return out


def shrinking_scan(series: PriceSeries, end_index: int | None = None, start_step: int = 5,
                   min_length: int = 750, fit_config: FitConfig | None = None,
                   levels=DEFAULT_LEVELS, group_starts=None, first_start: int = 0,
                   workers: int | None = None) -> ScanReport:
    """Windows ``[s, end_index]`` for s = first_start, +start_step, ... down to ``min_length``.

    ``group_starts`` lists start indices for the grouped summary; each group
    aggregates all windows starting on or after its boundary. Defaults to
    five evenly spaced boundaries.
    """
    fit_config = fit_config or FitConfig()
    end_index = series.last_index if end_index is None else int(end_index)
    if not 0 <= end_index <= series.last_index:
        raise ValueError(f"end_index {end_index} outside the series")
    windows = shrinking_windows(end_index, start_step, min_length, first_start)
    jobs = [(series, w, fit_config, tuple(levels), k) for k, w in enumerate(windows)]
    verdicts = _run(_window_job, jobs, workers)
    if group_starts is None:
        starts = [w.start_index for w in windows]
        group_starts = sorted({starts[int(i)] for i in np.linspace(0, len(starts) - 1, min(5, len(starts)))})
    config = {"end_index": end_index, "end_date": str(series.dates[end_index]), "start_step": start_step,
              "min_length": min_length, "first_start": first_start, "group_starts": [int(s) for s in group_starts],
              "fit_config": fit_config.as_dict(), "series_fingerprint": series.fingerprint()}
    groups = _groups(verdicts, group_starts, tuple(levels), series)
    return ScanReport("shrinking", verdicts, tuple(levels), config, groups)


def ensemble_lengths(count: int, length_spec, seed) -> tuple:
    """Path lengths and per-path seed sequences for a GARCH ensemble.

    ``length_spec`` is an int (fixed) or a ``(lo, hi)`` pair (uniform,
    inclusive). The master ``SeedSequence(seed)`` spawns one child for the
    lengths and one parent for the path seeds, so path ``k`` always uses the
    same stream whatever ``count`` is.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    master = np.random.SeedSequence(seed)
    length_ss, path_parent = master.spawn(2)
    if isinstance(length_spec, (int, np.integer)):
        lengths = np.full(count, int(length_spec))
    else:
        lo, hi = (int(x) for x in length_spec)
        if hi < lo:
            raise ValueError("length range is empty")
        lengths = make_rng(length_ss).integers(lo, hi + 1, size=count)
    if lengths.min() < MIN_ENSEMBLE_LENGTH:
        raise ValueError(f"ensemble paths must be at least {MIN_ENSEMBLE_LENGTH} days long")
    return [int(x) for x in lengths], path_parent.spawn(count)


def _garch_job(params, length, seed_seq, ln_I0, fit_config, levels, k):
    s = simulate_garch(params, length, ln_I0, seed_seq)
    v = analyse_window(s, fit_config, levels, k, 0)
    v.path_length = length
    return v


def garch_ensemble(params: GarchParams, count: int, length_spec=(750, 1500),
                   fit_config: FitConfig | None = None, seed=0, levels=DEFAULT_LEVELS,
                   ln_I0: float = 0.0, indices=None, workers: int | None = None) -> ScanReport:
    """Fit ``count`` simulated GARCH paths once each.

    ``indices`` restricts the run to a subset of path numbers (same seeds as
    in the full ensemble), which is how long ensembles are spot-checked.
    """
    fit_config = fit_config or FitConfig()
    lengths, seeds = ensemble_lengths(count, length_spec, seed)
    picked = range(count) if indices is None else [int(i) for i in indices]
    jobs = [(params, lengths[k], seeds[k], ln_I0, fit_config, tuple(levels), k) for k in picked]
    verdicts = _run(_garch_job, jobs, workers)
    spec = int(length_spec) if isinstance(length_spec, (int, np.integer)) else [int(x) for x in length_spec]
    config = {"garch": asdict(params), "count": count, "length_spec": spec, "seed": seed,
              "ln_I0": ln_I0, "indices": None if indices is None else list(picked),
              "fit_config": fit_config.as_dict()}
    return ScanReport("garch_ensemble", verdicts, tuple(levels), config)
