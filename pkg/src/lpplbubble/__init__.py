"""Bubble-regime detection with log-periodic power law calibration.

Submodules: ``timeseries`` (data model and CSV ingestion), ``lppl``
(trajectory and generators), ``calibration`` (nonlinear least squares),
``stationarity`` (residual diagnostics), ``bayes`` (model evidence) and
``scanner`` (window experiments).
"""

__version__ = "0.1.0"

from .timeseries import IngestError, PriceSeries, Window, ingest_csv, slice_series, write_csv
from .lppl import (
    PAPER_GARCH,
    GarchParams,
    LpplParams,
    OuResidualParams,
    lppl_delta_h,
    lppl_h,
    make_rng,
    simulate_bubble,
    simulate_garch,
)
from .calibration import FitConfig, FitError, LpplFit, check_lppl_conditions, fit_lppl, linear_subfit
from .stationarity import dickey_fuller, estimate_ar1, pacf, phillips_perron, select_ar_order
