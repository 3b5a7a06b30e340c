"""LPPL trajectory and synthetic path generators.

The trajectory is

    H(t) = A - B (tc - t)**beta * [1 + C / sqrt(1 + (omega/beta)**2) * cos(omega ln(tc - t) + phi)]

and the volatility-confined bubble process is the recursion

    ln I[t+1] = ln I[t] + dH(t) - alpha (ln I[t] - H(t)) + u[t],   u ~ N(0, sigma_u**2)

so the residual nu = ln I - H is AR(1) with coefficient 1 - alpha.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .timeseries import PriceSeries

__all__ = [
    "LpplParams",
    "OuResidualParams",
    "GarchParams",
    "PAPER_GARCH",
    "make_rng",
    "lppl_h",
    "lppl_delta_h",
    "damping",
    "draw_bubble_innovations",
    "simulate_bubble",
    "simulate_garch",
]


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator from an int or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class LpplParams:
    A: float
    B: float
    C: float
    beta: float
    omega: float
    phi: float
    t_c: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"LPPL parameter {k} is not finite: {v}")

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "LpplParams":
        d = asdict(self)
        d.update(changes)
        return LpplParams(**d)


@dataclass(frozen=True)
class OuResidualParams:
    alpha: float
    sigma_u: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma_u < 0.0:
            raise ValueError(f"sigma_u must be non-negative, got {self.sigma_u}")

    @property
    def stationary_variance(self) -> float:
        return self.sigma_u**2 / (1.0 - (1.0 - self.alpha) ** 2)


@dataclass(frozen=True)
class GarchParams:
    """GARCH(1,1) with Student-t innovations.

    ``sigma0_sq`` is the variance intercept, ``arch``/``garch`` the ARCH and
    GARCH coefficients and ``student_df`` the degrees of freedom.
    """

    mu0: float
    sigma0_sq: float
    arch: float
    garch: float
    student_df: int

    def __post_init__(self):
        if self.sigma0_sq <= 0:
            raise ValueError("sigma0_sq must be positive")
        if self.arch < 0 or self.garch < 0:
            raise ValueError("arch and garch must be non-negative")
        if self.arch + self.garch >= 1:
            raise ValueError("arch + garch must be < 1 for covariance stationarity")
        if self.student_df < 3:
            raise ValueError("student_df must be >= 3")

    @property
    def unconditional_variance(self) -> float:
        return self.sigma0_sq / (1.0 - self.arch - self.garch)


# Daily S&P500 1950-2008 estimates; the printed "sigma_0 = 5.1e-7" is read as the variance intercept.
PAPER_GARCH = GarchParams(mu0=5.4e-4, sigma0_sq=5.1e-7, arch=0.07, garch=0.926, student_df=7)


def damping(beta: float, omega: float) -> float:
    return 1.0 / math.sqrt(1.0 + (omega / beta) ** 2)


def lppl_h(params: LpplParams, t):
    """Evaluate H at trading-day index ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    dt = params.t_c - t_arr
    if np.any(dt <= 0):
        raise ValueError(f"H is singular for t >= t_c = {params.t_c}")
    p = params
    log_dt = np.log(dt)
    osc = 1.0 + p.C * damping(p.beta, p.omega) * np.cos(p.omega * log_dt + p.phi)
    h = p.A - p.B * np.exp(p.beta * log_dt) * osc
    return float(h) if h.ndim == 0 else h


def lppl_delta_h(params: LpplParams, t):
    """One-day increment H(t+1) - H(t); the level A cancels."""
    t_arr = np.asarray(t, dtype=float)
    zero_a = params.replace(A=0.0)
    d = lppl_h(zero_a, t_arr + 1.0) - lppl_h(zero_a, t_arr)
    return float(d) if np.ndim(d) == 0 else d


def draw_bubble_innovations(resid: OuResidualParams, length: int, seed) -> np.ndarray:
    """The ``length - 1`` Gaussian shocks u_t consumed by :func:`simulate_bubble`."""
    rng = make_rng(seed)
    return resid.sigma_u * rng.standard_normal(length - 1)


def simulate_bubble(params: LpplParams, resid: OuResidualParams, length: int,
                    ln_I0: float, seed, start_date="2000-01-03") -> PriceSeries:
    """Simulate the volatility-confined LPPL process for ``length`` days.

    Deterministic for a fixed ``seed``; ``ln I[0] = ln_I0``.
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    if not params.t_c > length + 1:
        raise ValueError(f"t_c = {params.t_c} falls inside the simulated range (length {length})")
    u = draw_bubble_innovations(resid, length, seed)
    t = np.arange(length, dtype=float)
    h = lppl_h(params, t)
    dh = np.diff(h)
    a = resid.alpha
    ln_i = np.empty(length)
    ln_i[0] = ln_I0
    for k in range(length - 1):
        ln_i[k + 1] = ln_i[k] + dh[k] - a * (ln_i[k] - h[k]) + u[k]
    return PriceSeries.from_log_prices(ln_i, start=start_date)


def simulate_garch(params: GarchParams, length: int, ln_I0: float, seed,
                   start_date="2000-01-03") -> PriceSeries:
    """Simulate log prices whose daily returns follow GARCH(1,1)-t.

    Innovations are Student-t scaled to unit variance. The first conditional
    variance is the unconditional one and the presample return is mu0.
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    rng = make_rng(seed)
    n = params.student_df
    z = rng.standard_t(n, size=length - 1) / math.sqrt(n / (n - 2.0))
    r = np.empty(length - 1)
    var = params.unconditional_variance
    prev_dev = 0.0  # presample return equals mu0
    for k in range(length - 1):
        if k > 0:
            var = params.sigma0_sq + params.arch * prev_dev * prev_dev + params.garch * var
        prev_dev = math.sqrt(var) * z[k]
        r[k] = params.mu0 + prev_dev
    ln_i = np.concatenate(([ln_I0], ln_I0 + np.cumsum(r)))
    return PriceSeries.from_log_prices(ln_i, start=start_date)
