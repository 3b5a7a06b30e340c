"""
Shrinking windows approaching the end of a bubble
=================================================

Calm GARCH returns turn into a bubble. Windows share the last date and
their start moves forward, so later groups see mostly the bubble.
The fraction of windows obeying the LPPL conditions should rise.
"""

import numpy as np

from lpplbubble import PAPER_GARCH, LpplParams, OuResidualParams, PriceSeries, lppl_h, simulate_bubble, simulate_garch
from lpplbubble.scanner import shrinking_scan

calm = simulate_garch(PAPER_GARCH, 400, 5.0, seed=21).log_price
p = LpplParams(A=7.0, B=0.0111, C=0.7344, beta=0.8259, omega=6.3039, phi=6.2832, t_c=499 + 31.0)
boom = simulate_bubble(p, OuResidualParams(0.03, 0.008), 500, float(lppl_h(p, 0)), seed=22).log_price
boom = boom - boom[0] + calm[-1]
series = PriceSeries.from_log_prices(np.concatenate((calm, boom[1:])))

report = shrinking_scan(series, start_step=40, min_length=480, group_starts=[0, 160, 320])
for g in report.groups:
    p_st = g["p_stationary_given_lppl"]
    print(f"starts >= {g['start_index']:4d}: {g['n_windows']:2d} windows, P_LPPL {100 * g['p_lppl']:5.1f}%, "
          f"stationary | LPPL at 1%: {100 * p_st[0.01]:5.1f}%")
