"""Unit-root and autoregression diagnostics for fit residuals.

All regressions are no-constant, no-trend: residuals of a fitted trajectory
are centred by construction. The unit-root statistic is the t-ratio of the
slope in ``diff(x)[t] = rho * x[t-1] + e[t]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .lppl import make_rng

__all__ = [
    "StationarityError",
    "CRITICAL_VALUES",
    "UnitRootReport",
    "Ar1Report",
    "ArOrderReport",
    "PacfReport",
    "dickey_fuller",
    "phillips_perron",
    "newey_west_bandwidth",
    "long_run_variance",
    "estimate_ar1",
    "pacf",
    "select_ar_order",
    "simulate_df_critical_values",
    "residual_diagnostics",
]

MIN_UNIT_ROOT_LENGTH = 25

# No-constant Dickey-Fuller critical values. 1% and 5% are the asymptotic
# MacKinnon values; 0.1% is the value printed alongside them in the study's
# residual-test table (cross-check with simulate_df_critical_values).
CRITICAL_VALUES = {0.001: -3.588, 0.01: -2.567, 0.05: -1.941}


class StationarityError(ValueError):
    pass


@dataclass
class UnitRootReport:
    test: str
    statistic: float
    critical_values: dict
    reject: dict
    regression_spec: str = "no-constant"
    bandwidth_or_lags: int = 0
    nobs: int = 0
    simulated_critical_values: dict | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["critical_values"] = {str(k): v for k, v in self.critical_values.items()}
        d["reject"] = {str(k): v for k, v in self.reject.items()}
        if self.simulated_critical_values is not None:
            d["simulated_critical_values"] = {str(k): v for k, v in self.simulated_critical_values.items()}
        return d


@dataclass
class Ar1Report:
    alpha_hat: float
    std_error: float
    t_statistic: float
    innovation_variance: float
    nobs: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ArOrderReport:
    order_sic: int
    order_hq: int
    criterion_values: dict = field(default_factory=dict)
    nobs: int = 0

    def order(self, criterion: str) -> int:
        return {"SIC": self.order_sic, "HQ": self.order_hq}[criterion.upper()]

    def as_dict(self) -> dict:
        return {
            "order_sic": self.order_sic,
            "order_hq": self.order_hq,
            "nobs": self.nobs,
            "criterion_values": {str(k): v for k, v in self.criterion_values.items()},
        }


@dataclass
class PacfReport:
    values: np.ndarray
    band: float

    def as_dict(self) -> dict:
        return {"lags": list(range(1, len(self.values) + 1)),
                "values": [float(v) for v in self.values], "band": self.band}


def _as_series(x, min_len):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise StationarityError("expected a 1-d series")
    if len(x) < min_len:
        raise StationarityError(f"series too short: need >= {min_len}, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise StationarityError("series contains non-finite values")
    if np.ptp(x) == 0.0:
        raise StationarityError("zero-variance series")
    return x


def _ols(y, X):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ coef
    n, k = X.shape
    s2 = (e @ e) / (n - k)
    cov = s2 * np.linalg.inv(X.T @ X)
    return coef, np.sqrt(np.diag(cov)), e, s2


def _df_regression(x, lags=0):
    dx = np.diff(x)
    cols = [x[lags:-1]]
    for j in range(1, lags + 1):
        cols.append(dx[lags - j:len(dx) - j])
    y = dx[lags:]
    X = np.column_stack(cols)
    coef, se, e, s2 = _ols(y, X)
    return coef[0], se[0], e, s2


def _reject(stat, critical_values):
    return {lvl: bool(stat < cv) for lvl, cv in critical_values.items()}


def dickey_fuller(resid, lags: int = 0, critical_values=None) -> UnitRootReport:
    """No-constant Dickey-Fuller test; unaugmented unless ``lags`` > 0."""
    x = _as_series(resid, MIN_UNIT_ROOT_LENGTH)
    cvs = dict(critical_values or CRITICAL_VALUES)
    rho, se, e, _ = _df_regression(x, lags)
    # an exact fit leaves se == 0; the statistic is then +-inf
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = float(rho / se)
    return UnitRootReport("dickey_fuller", stat, cvs, _reject(stat, cvs),
                          bandwidth_or_lags=lags, nobs=len(e))


def newey_west_bandwidth(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def long_run_variance(e, bandwidth: int) -> float:
    """Bartlett-kernel Newey-West estimate (divisor n) of the long-run variance."""
    n = len(e)
    lrv = (e @ e) / n
    for j in range(1, bandwidth + 1):
        lrv += 2.0 * (1.0 - j / (bandwidth + 1.0)) * (e[j:] @ e[:-j]) / n
    return float(lrv)


def phillips_perron(resid, bandwidth: int | None = None, critical_values=None) -> UnitRootReport:
    """Phillips-Perron Z_t test, no constant, Bartlett kernel.

    The default bandwidth is ``floor(4 (n/100)**(2/9))``; ``bandwidth=0``
    reproduces the Dickey-Fuller statistic.
    """
    x = _as_series(resid, MIN_UNIT_ROOT_LENGTH)
    cvs = dict(critical_values or CRITICAL_VALUES)
    rho, se, e, s2 = _df_regression(x, 0)
    n = len(e)
    if bandwidth is None:
        bandwidth = newey_west_bandwidth(n)
    gamma0 = (e @ e) / n
    lam2 = long_run_variance(e, bandwidth)
    if lam2 <= 0:
        raise StationarityError("non-positive long-run variance estimate")
    if se == 0.0:
        raise StationarityError("exact autoregressive fit; Phillips-Perron correction undefined")
    t_rho = rho / se
    lam = math.sqrt(lam2)
    stat = math.sqrt(gamma0 / lam2) * t_rho - (lam2 - gamma0) / (2.0 * lam) * (n * se / math.sqrt(s2))
    stat = float(stat)
    return UnitRootReport("phillips_perron", stat, cvs, _reject(stat, cvs),
                          bandwidth_or_lags=bandwidth, nobs=n)


def estimate_ar1(resid) -> Ar1Report:
    """OLS of ``diff(nu)`` on lagged ``nu``; ``alpha_hat`` is minus the slope."""
    x = _as_series(resid, 10)
    rho, se, e, s2 = _df_regression(x, 0)
    alpha = -float(rho)
    se = float(se)
    return Ar1Report(alpha_hat=alpha, std_error=se, t_statistic=-alpha / se,
                     innovation_variance=float(s2), nobs=len(e))


def pacf(series, max_lag: int = 20) -> PacfReport:
    """Partial autocorrelations at lags 1..max_lag by Durbin-Levinson.

    ``band`` is the two-standard-error half width ``2/sqrt(n)``.
    """
    x = _as_series(series, 2)
    n = len(x)
    if not 1 <= max_lag < n / 4:
        raise StationarityError(f"max_lag must satisfy 1 <= max_lag < n/4 (n={n})")
    xc = x - x.mean()
    c0 = xc @ xc
    r = np.array([1.0] + [(xc[k:] @ xc[:-k]) / c0 for k in range(1, max_lag + 1)])
    out = np.empty(max_lag)
    phi = np.zeros(0)
    for k in range(1, max_lag + 1):
        if k == 1:
            pkk = r[1]
        else:
            num = r[k] - phi @ r[k - 1:0:-1]
            den = 1.0 - phi @ r[1:k]
            pkk = num / den
        phi = np.concatenate((phi - pkk * phi[::-1], [pkk]))
        out[k - 1] = pkk
    return PacfReport(out, 2.0 / math.sqrt(n))


def select_ar_order(resid, max_order: int = 5, criterion: str | None = None) -> ArOrderReport:
    """Pick the AR order minimising SIC and HQ over 0..max_order.

    Every order is fitted by no-constant OLS on the same sample, which drops
    the first ``max_order`` observations.
    """
    if max_order < 1:
        raise StationarityError("max_order must be >= 1")
    x = _as_series(resid, 10 * max_order + 1)
    if criterion is not None and criterion.upper() not in ("SIC", "HQ"):
        raise StationarityError(f"unknown criterion {criterion!r}")
    y = x[max_order:]
    n = len(y)
    lagged = np.column_stack([x[max_order - j:len(x) - j] for j in range(1, max_order + 1)])
    table = {}
    for k in range(max_order + 1):
        if k == 0:
            rss = y @ y
        else:
            X = lagged[:, :k]
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            e = y - X @ coef
            rss = e @ e
        ll = math.log(rss / n)
        table[k] = {"SIC": ll + k * math.log(n) / n, "HQ": ll + k * 2.0 * math.log(math.log(n)) / n}
    sic = min(table, key=lambda k: table[k]["SIC"])
    hq = min(table, key=lambda k: table[k]["HQ"])
    return ArOrderReport(order_sic=sic, order_hq=hq, criterion_values=table, nobs=n)


def simulate_df_critical_values(n: int = 1000, reps: int = 100_000, levels=(0.001, 0.01, 0.05),
                                seed=0, chunk: int = 5000) -> dict:
    """Empirical quantiles of the no-constant DF statistic under a Gaussian random walk."""
    rng = make_rng(seed)
    stats = np.empty(reps)
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        u = rng.standard_normal((m, n))
        x = np.cumsum(u, axis=1)
        xl, dx = x[:, :-1], u[:, 1:]
        sxx = np.einsum("ij,ij->i", xl, xl)
        rho = np.einsum("ij,ij->i", xl, dx) / sxx
        e = dx - rho[:, None] * xl
        s2 = np.einsum("ij,ij->i", e, e) / (n - 2)
        stats[done:done + m] = rho / np.sqrt(s2 / sxx)
        done += m
    return {lvl: float(np.quantile(stats, lvl)) for lvl in levels}


def residual_diagnostics(resid, max_lag: int = 20, max_order: int = 5) -> dict:
    """DF, PP, AR(1), PACF and AR-order reports bundled for JSON output."""
    resid = np.asarray(resid, dtype=float)
    out = {
        "dickey_fuller": dickey_fuller(resid).as_dict(),
        "phillips_perron": phillips_perron(resid).as_dict(),
        "ar1": estimate_ar1(resid).as_dict(),
    }
    if max_lag < len(resid) / 4:
        out["pacf"] = pacf(resid, max_lag).as_dict()
    if len(resid) > 10 * max_order:
        out["ar_order"] = select_ar_order(resid, max_order).as_dict()
    return out
