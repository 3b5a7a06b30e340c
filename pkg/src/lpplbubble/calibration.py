"""Least-squares calibration of the LPPL trajectory to a log-price window.

For fixed (t_c, beta, omega, phi) the trajectory is linear in A, B and
B*C, so the search runs over those four nonlinear parameters only: a
deterministic grid picks the starting points and a bounded simplex refines
the best of them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .lppl import LpplParams, damping, lppl_h
from .timeseries import PriceSeries

__all__ = [
    "FitError",
    "DegenerateSeriesError",
    "RankDeficientError",
    "ConvergenceError",
    "FitConfig",
    "LpplFit",
    "LinearSubfit",
    "MIN_FIT_LENGTH",
    "QUALIFYING_BOUNDS",
    "check_lppl_conditions",
    "linear_subfit",
    "fit_lppl",
]

MIN_FIT_LENGTH = 100

# Stylized-fact filter: B > 0, beta and omega inside these closed ranges, |C| < 1.
QUALIFYING_BOUNDS = {"beta": (0.1, 0.9), "omega": (6.0, 13.0)}

TWO_PI = 2.0 * math.pi


class FitError(RuntimeError):
    """Base class for calibration failures."""


class DegenerateSeriesError(FitError):
    pass


class RankDeficientError(FitError):
    pass


class ConvergenceError(FitError):
    """No local refinement converged; ``best`` holds the best partial result."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class FitConfig:
    tc_max_beyond_end: int = 252
    tc_search_beyond_end: int | None = None
    grid_tc: int = 10
    grid_beta: int = 8
    grid_omega: int = 8
    grid_phi: int = 4
    beta_bounds: tuple = (0.05, 0.95)
    omega_bounds: tuple = (4.0, 16.0)
    n_refine: int = 20
    local_optimizer: str = "simplex"
    max_iterations: int = 3000
    convergence_tol: float = 1e-10

    def __post_init__(self):
        if self.tc_max_beyond_end < 1:
            raise ValueError("tc_max_beyond_end must be >= 1")
        if self.tc_search_beyond_end is not None and self.tc_search_beyond_end < self.tc_max_beyond_end:
            raise ValueError("tc_search_beyond_end must be >= tc_max_beyond_end")
        if min(self.grid_tc, self.grid_beta, self.grid_omega, self.grid_phi, self.n_refine) < 1:
            raise ValueError("grid counts and n_refine must be >= 1")
        if self.local_optimizer not in ("simplex", "gradient-based"):
            raise ValueError(f"unknown local optimizer {self.local_optimizer!r}")
        object.__setattr__(self, "beta_bounds", tuple(self.beta_bounds))
        object.__setattr__(self, "omega_bounds", tuple(self.omega_bounds))

    @property
    def tc_search_horizon(self) -> int:
        return self.tc_max_beyond_end if self.tc_search_beyond_end is None else self.tc_search_beyond_end

    def as_dict(self) -> dict:
        d = asdict(self)
        d["beta_bounds"] = list(self.beta_bounds)
        d["omega_bounds"] = list(self.omega_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        return cls(**d)


@dataclass(frozen=True)
class LinearSubfit:
    A: float
    B: float
    BC: float
    sse: float


@dataclass
class LpplFit:
    params: LpplParams
    sse: float
    residuals: np.ndarray
    qualified: bool
    conditions: dict
    n_converged: int = 0
    n_starts: int = 0
    nfev: int = 0
    config: FitConfig = field(default_factory=FitConfig)

    def to_dict(self, include_residuals: bool = False) -> dict:
        d = {
            "params": self.params.as_dict(),
            "sse": self.sse,
            "qualified": self.qualified,
            "conditions": dict(self.conditions),
            "n_starts": self.n_starts,
            "n_converged": self.n_converged,
            "nfev": self.nfev,
            "config": self.config.as_dict(),
        }
        if include_residuals:
            d["residuals"] = [float(x) for x in self.residuals]
        return d


def check_lppl_conditions(params: LpplParams, last_index: float, tc_max_beyond_end: float = 252) -> dict:
    """Evaluate the qualification filter; returns per-condition booleans plus ``qualified``."""
    b_lo, b_hi = QUALIFYING_BOUNDS["beta"]
    w_lo, w_hi = QUALIFYING_BOUNDS["omega"]
    report = {
        "B_positive": bool(params.B > 0),
        "beta_range": bool(b_lo <= params.beta <= b_hi),
        "omega_range": bool(w_lo <= params.omega <= w_hi),
        "C_abs_below_1": bool(abs(params.C) < 1),
        "tc_horizon": bool(last_index < params.t_c <= last_index + tc_max_beyond_end),
    }
    report["qualified"] = all(report.values())
    return report


def _design(t, beta, omega, phi, t_c):
    log_dt = np.log(t_c - t)
    f = np.exp(beta * log_dt)
    g = f * np.cos(omega * log_dt + phi) * damping(beta, omega)
    return f, g


def linear_subfit(series: PriceSeries, beta: float, omega: float, phi: float, t_c: float) -> LinearSubfit:
    """Solve for (A, B, B*C) by ordinary least squares at fixed nonlinear parameters."""
    t = series.index
    if not t_c > t[-1]:
        raise ValueError(f"t_c = {t_c} must exceed the last index {t[-1]}")
    y = series.log_price
    f, g = _design(t, beta, omega, phi, t_c)
    X = np.column_stack((np.ones_like(t), -f, -g))
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3 or sv[-1] <= sv[0] * 1e-12:
        raise RankDeficientError(
            f"design matrix is rank deficient at beta={beta}, omega={omega}, t_c={t_c}"
        )
    r = y - X @ coef
    return LinearSubfit(float(coef[0]), float(coef[1]), float(coef[2]), float(r @ r))


class _Objective:
    """SSE as a function of x = (t_c, beta, omega, phi), A/B/BC profiled out."""

    def __init__(self, t, y):
        self.t = t
        self.y_mean = float(y.mean())
        self.y = y - self.y_mean
        self.inv_n = 1.0 / len(t)
        self.nfev = 0

    def coefficients(self, x):
        """(A, B, B*C) for the centred target and the SSE.

        The intercept is eliminated by centring, leaving a 2x2 system.
        """
        t_c, beta, omega, phi = x
        f, g = _design(self.t, beta, omega, phi, t_c)
        f_mean = f.sum() * self.inv_n
        g_mean = g.sum() * self.inv_n
        fc = f - f_mean
        gc = g - g_mean
        a11, a12, a22 = fc @ fc, fc @ gc, gc @ gc
        b1, b2 = fc @ self.y, gc @ self.y
        det = a11 * a22 - a12 * a12
        if not det > 1e-14 * a11 * a22:
            raise np.linalg.LinAlgError("singular design")
        # H = A - B f - BC g, so the regression coefficients carry a minus sign
        cf = (a22 * b1 - a12 * b2) / det
        cg = (a11 * b2 - a12 * b1) / det
        r = self.y - cf * fc - cg * gc
        A = -(cf * f_mean + cg * g_mean)
        return np.array([A, -cf, -cg]), float(r @ r)

    def __call__(self, x):
        self.nfev += 1
        try:
            _, sse = self.coefficients(x)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return np.inf
        return sse if math.isfinite(sse) else np.inf


def _tc_grid(last, config):
    hi = config.tc_search_horizon
    return last + np.geomspace(min(2.0, hi), hi, config.grid_tc)


def _grid_search(obj: _Objective, last: float, config: FitConfig):
    """SSE over the full start grid via batched 3x3 normal equations."""
    t, y = obj.t, obj.y
    n = float(len(t))
    betas = np.linspace(*config.beta_bounds, config.grid_beta)
    omegas = np.linspace(*config.omega_bounds, config.grid_omega)
    phis = np.arange(config.grid_phi) * (TWO_PI / config.grid_phi)
    om, ph = np.meshgrid(omegas, phis, indexing="ij")
    om, ph = om.ravel(), ph.ravel()
    yy = y @ y
    sy = y.sum()
    out = []
    for t_c in _tc_grid(last, config):
        log_dt = np.log(t_c - t)
        for beta in betas:
            f = np.exp(beta * log_dt)
            damp = 1.0 / np.sqrt(1.0 + (om / beta) ** 2)
            G = np.cos(np.outer(om, log_dt) + ph[:, None]) * (f * damp[:, None])
            # columns (1, f, g) up to sign; sign flips do not change the SSE
            sf, sff, sfy = f.sum(), f @ f, f @ y
            sg, sfg, sgg, sgy = G.sum(1), G @ f, np.einsum("ij,ij->i", G, G), G @ y
            m = len(om)
            M = np.empty((m, 3, 3))
            M[:, 0, 0] = n
            M[:, 0, 1] = M[:, 1, 0] = sf
            M[:, 1, 1] = sff
            M[:, 0, 2] = M[:, 2, 0] = sg
            M[:, 1, 2] = M[:, 2, 1] = sfg
            M[:, 2, 2] = sgg
            rhs = np.stack((np.full(m, sy), np.full(m, sfy), sgy), axis=1)
            try:
                c = np.linalg.solve(M, rhs[..., None])[..., 0]
                sse = yy - np.einsum("ij,ij->i", c, rhs)
            except np.linalg.LinAlgError:
                sse = np.full(m, np.inf)
            for k in range(m):
                out.append((float(sse[k]), (float(t_c), float(beta), float(om[k]), float(ph[k]))))
    obj.nfev += len(out)
    return out


def _refine(obj: _Objective, x0, bounds, config: FitConfig, xatol=1e-5):
    x0 = np.clip(np.asarray(x0, dtype=float), [b[0] for b in bounds], [b[1] for b in bounds])
    if config.local_optimizer == "simplex":
        steps = np.array([max(2.0, 0.1 * (x0[0] - bounds[0][0] + 1.0)), 0.05, 0.5, 0.5])
        simplex = np.vstack([x0] + [x0 + np.eye(4)[i] * steps[i] for i in range(4)])
        # keep the initial simplex inside the box
        for i, (lo, hi) in enumerate(bounds):
            over = simplex[:, i] > hi
            simplex[over, i] = x0[i] - steps[i]
            simplex[:, i] = np.clip(simplex[:, i], lo, hi)
        f0 = obj(x0)
        res = minimize(
            obj, x0, method="Nelder-Mead", bounds=bounds,
            options={
                "initial_simplex": simplex,
                "maxiter": config.max_iterations,
                "maxfev": 2 * config.max_iterations,
                "xatol": xatol,
                "fatol": config.convergence_tol * (f0 if math.isfinite(f0) else 1.0),
            },
        )
    else:
        res = minimize(obj, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": config.max_iterations, "ftol": config.convergence_tol})
    return res


def fit_lppl(series: PriceSeries, config: FitConfig | None = None) -> LpplFit:
    """Calibrate the LPPL trajectory to ``series.log_price`` by least squares.

    t_c is searched in (last index, last index + ``tc_max_beyond_end``];
    beta and omega are confined to the config's search box, which is wider
    than the qualification bounds. The returned phase is wrapped into
    [0, 2*pi).

    Raises:
        ValueError: fewer than ``MIN_FIT_LENGTH`` observations.
        DegenerateSeriesError: constant log price.
        ConvergenceError: no refinement converged.
    """
    config = config or FitConfig()
    if len(series) < MIN_FIT_LENGTH:
        raise ValueError(f"need at least {MIN_FIT_LENGTH} observations to fit, got {len(series)}")
    y = series.log_price
    if np.ptp(y) == 0.0:
        raise DegenerateSeriesError("log price is constant; no LPPL fit exists")
    t = series.index
    last = float(t[-1])
    obj = _Objective(t, y)
    bounds = [
        (last + 1e-3, last + config.tc_search_horizon),
        tuple(config.beta_bounds),
        tuple(config.omega_bounds),
        (-4.0 * math.pi, 6.0 * math.pi),
    ]

    grid = [g for g in _grid_search(obj, last, config) if math.isfinite(g[0])]
    grid.sort(key=lambda g: (g[0], g[1][0]))
    starts = [x for _, x in grid[: config.n_refine]]

    results = []
    n_converged = 0
    for x0 in starts:
        res = _refine(obj, x0, bounds, config)
        n_converged += bool(res.success)
        if math.isfinite(res.fun):
            results.append((float(res.fun), tuple(map(float, res.x)), bool(res.success)))
    if not results:
        raise ConvergenceError("every local refinement diverged")
    results.sort(key=lambda r: (r[0], r[1][0]))
    # a restart from the incumbent escapes simplex collapse
    polish = _refine(obj, results[0][1], bounds, config, xatol=1e-9)
    if math.isfinite(polish.fun) and polish.fun <= results[0][0]:
        n_converged += bool(polish.success)
        results.append((float(polish.fun), tuple(map(float, polish.x)), bool(polish.success)))

    best_sse = min(r[0] for r in results)
    ties = [r for r in results if r[0] <= best_sse * (1 + 1e-12) + 1e-300]
    _, x_best, _ = min(ties, key=lambda r: r[1][0])

    coef, _ = obj.coefficients(x_best)
    t_c, beta, omega, phi = x_best
    A = float(coef[0]) + obj.y_mean
    B = float(coef[1])
    C = float(coef[2]) / B if B != 0.0 else (math.copysign(math.inf, coef[2]) if coef[2] else 0.0)
    if not math.isfinite(C):
        C = math.copysign(1e300, C)
    params = LpplParams(A=A, B=B, C=C, beta=beta, omega=omega, phi=phi % TWO_PI, t_c=t_c)
    resid = y - lppl_h(params, t)
    conditions = check_lppl_conditions(params, last, config.tc_max_beyond_end)
    fit = LpplFit(
        params=params,
        sse=float(resid @ resid),
        residuals=resid,
        qualified=conditions["qualified"],
        conditions=conditions,
        n_converged=n_converged,
        n_starts=len(starts),
        nfev=obj.nfev,
        config=config,
    )
    if n_converged == 0:
        raise ConvergenceError("no local refinement converged", best=fit)
    return fit
