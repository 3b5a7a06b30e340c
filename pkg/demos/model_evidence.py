"""
Comparing BS, PL and LPPL by marginal likelihood
================================================

Prior-sampling Monte Carlo estimates the evidence of three nested return
models: Black-Scholes, a pure power law and the full LPPL model with
mean-reverting residuals. The repetitions give the estimator's spread.
"""

import math

from lpplbubble import PAPER_GARCH, LpplParams, OuResidualParams, simulate_bubble, simulate_garch
from lpplbubble.bayes import log_bayes_factor, log_marginal_likelihood

n = 946
p = LpplParams(A=6.0, B=0.01, C=0.5, beta=0.57, omega=6.4, phi=math.pi, t_c=n - 1 + 30.0)
cases = {
    "bubble": simulate_bubble(p, OuResidualParams(0.05, 0.008), n, 5.6, seed=0),
    "garch": simulate_garch(PAPER_GARCH, n, 5.6, seed=1000),
}

for name, series in cases.items():
    ev = {m: log_marginal_likelihood(m, series, mc_samples=10_000, repetitions=5, seed=0)
          for m in ("BS", "PL", "LPPL")}
    print(f"== {name}")
    for m, e in ev.items():
        print(f"  {m:5s} log-ML {e.mean:10.3f}  [{e.quantile_2_5:.3f}, {e.quantile_97_5:.3f}]")
    print(f"  log Bayes factor LPPL vs BS: {log_bayes_factor(ev['LPPL'], ev['BS']):.2f}")
