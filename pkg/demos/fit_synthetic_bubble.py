"""
Calibrating the LPPL trajectory to a simulated bubble
=====================================================

A bubble path is simulated with mean-reverting residuals around a known
LPPL trajectory, then the multi-start least-squares fit tries to recover
the critical time and the nonlinear parameters.
"""

import numpy as np

from lpplbubble import LpplParams, OuResidualParams, fit_lppl, lppl_h, simulate_bubble

n = 946
true = LpplParams(A=7.0, B=0.0111, C=0.7344, beta=0.8259, omega=6.3039, phi=6.2832, t_c=n - 1 + 31.0)
resid = OuResidualParams(alpha=0.03, sigma_u=0.008)

series = simulate_bubble(true, resid, n, float(lppl_h(true, 0)), seed=42)
print(f"simulated {len(series)} days, {series.dates[0]} .. {series.dates[-1]}")

fit = fit_lppl(series)
print(f"{'':8s}{'true':>10s}{'fitted':>10s}")
for name in ("t_c", "beta", "omega", "phi", "A", "B", "C"):
    print(f"{name:8s}{getattr(true, name):10.4f}{getattr(fit.params, name):10.4f}")

print("qualified:", fit.qualified)
for cond, ok in fit.conditions.items():
    if cond == "qualified":
        continue
    print(f"  {cond}: {ok}")

true_sse = float(np.sum((series.log_price - lppl_h(true, np.arange(n))) ** 2))
print(f"SSE of fit {fit.sse:.5f} vs SSE at the generating parameters {true_sse:.5f}")
