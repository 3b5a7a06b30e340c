"""
Are the fit residuals mean-reverting?
=====================================

A bubble regime should leave stationary residuals behind the LPPL fit.
This runs the no-constant Dickey-Fuller and Phillips-Perron tests, the
AR(1) regression and the PACF on residuals of a simulated bubble, and
contrasts them with a plain random walk.
"""

import numpy as np

from lpplbubble import LpplParams, OuResidualParams, fit_lppl, lppl_h, make_rng, simulate_bubble
from lpplbubble.stationarity import residual_diagnostics

n = 946
p = LpplParams(A=7.2, B=0.0833, C=0.782, beta=0.3795, omega=6.3787, phi=4.3364, t_c=n - 1 + 50.0)
series = simulate_bubble(p, OuResidualParams(0.03, 0.008), n, float(lppl_h(p, 0)), seed=7)
bubble_resid = fit_lppl(series).residuals
walk = np.cumsum(0.008 * make_rng(8).standard_normal(n))

for label, x in (("bubble fit residuals", bubble_resid), ("random walk", walk)):
    d = residual_diagnostics(x)
    print(f"== {label}")
    for test in ("dickey_fuller", "phillips_perron"):
        r = d[test]
        print(f"  {test:16s} stat {r['statistic']:7.3f}  reject@1%: {r['reject']['0.01']}")
    print(f"  AR(1) alpha_hat {d['ar1']['alpha_hat']:.4f} (se {d['ar1']['std_error']:.4f})")
    print(f"  PACF lag 1 {d['pacf']['values'][0]:.4f}, band +-{d['pacf']['band']:.4f}")
