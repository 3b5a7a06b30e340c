"""
How often does pure GARCH noise look like a bubble?
===================================================

Paths are drawn from a GARCH(1,1) model with Student-t innovations and
fitted once each. The report gives the fraction that passes the LPPL
conditions and how often the residual unit-root null survives.
A small ensemble keeps this quick; the acceptance suite runs 200 paths.
"""

from lpplbubble import PAPER_GARCH
from lpplbubble.scanner import garch_ensemble

report = garch_ensemble(PAPER_GARCH, count=20, length_spec=(750, 1500), seed=1)
agg = report.aggregates
print(f"paths: {agg['n_windows']}, qualified: {agg['n_qualified']}, fit failures: {agg['n_failed']}")
print(f"P_LPPL = {100 * agg['p_lppl']:.1f}%")
for test in ("dickey_fuller", "phillips_perron"):
    nr = agg["non_rejection"][test]
    print(f"{test}: unit root not rejected in "
          + ", ".join(f"{100 * v:.0f}% at {lvl}" for lvl, v in nr.items()))

for v in report.verdicts[:5]:
    print(f"  path {v.window_index}: length {v.path_length}, qualified {v.qualified}, "
          f"DF {v.df_statistic:.2f}, PP {v.pp_statistic:.2f}")
