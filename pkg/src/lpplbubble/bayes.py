"""Monte-Carlo marginal likelihoods for three return models.

* ``BS``   -- i.i.d. Gaussian returns with drift ``mu`` and precision ``tau``.
* ``PL``   -- volatility-confined power law (the LPPL model with C = 0).
* ``LPPL`` -- volatility-confined LPPL: given the previous log price,

      r[i] ~ N(dH[i] - alpha (q[i-1] - H[i-1]), 1/tau)

  which is the same as ``nu[i] - (1 - alpha) nu[i-1] ~ N(0, 1/tau)`` with
  ``nu = q - H``.

The likelihood conditions on the first observation. Every time step is one
trading day. Evidence is estimated by plain prior sampling:
``log mean exp(loglik)`` over ``mc_samples`` draws, repeated with
independent seeds to expose the estimator's spread.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .lppl import LpplParams, lppl_h, make_rng
from .timeseries import PriceSeries

__all__ = [
    "MODELS",
    "MODEL_PARAMETERS",
    "Normal",
    "Gamma",
    "Uniform",
    "Beta",
    "PriorSpec",
    "ModelEvidence",
    "EvidenceError",
    "adjusted_returns",
    "log_likelihood",
    "log_likelihood_batch",
    "sample_prior",
    "log_mean_exp",
    "log_marginal_likelihood",
    "bayes_factor",
    "log_bayes_factor",
]

MODELS = ("BS", "PL", "LPPL")

MODEL_PARAMETERS = {
    "BS": ("mu", "tau"),
    "PL": ("tau", "alpha", "A", "B", "beta", "tc_minus_tN"),
    "LPPL": ("tau", "alpha", "A", "B", "C", "beta", "omega", "phi", "tc_minus_tN"),
}

LOG_2PI = math.log(2.0 * math.pi)


class EvidenceError(ValueError):
    pass


# --- prior descriptors -------------------------------------------------------


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class Gamma:
    """Shape-scale Gamma: mean ``shape * scale``, variance ``shape * scale**2``."""

    shape: float
    scale: float

    def sample(self, rng, size):
        return rng.gamma(self.shape, self.scale, size)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def sample(self, rng, size):
        return rng.beta(self.a, self.b, size)


_DISTS = {"normal": Normal, "gamma": Gamma, "uniform": Uniform, "beta": Beta}


def _dist_to_dict(d) -> dict:
    name = {v: k for k, v in _DISTS.items()}[type(d)]
    return {"dist": name, **asdict(d)}


def _dist_from_dict(d: dict):
    d = dict(d)
    cls = _DISTS[d.pop("dist")]
    return cls(**d)


@dataclass(frozen=True)
class PriorSpec:
    mu: Normal
    tau: Gamma
    alpha: Gamma
    A: Normal
    B: Gamma
    C: Uniform
    beta: Beta
    omega: Gamma
    phi: Uniform
    tc_minus_tN: Gamma

    def __post_init__(self):
        for name, d in self.items():
            for k, v in asdict(d).items():
                if k in ("sd", "shape", "scale", "a", "b") and not v > 0:
                    raise ValueError(f"prior {name}.{k} must be positive, got {v}")
            if isinstance(d, Uniform) and not d.high > d.low:
                raise ValueError(f"prior {name} has an empty support")

    def items(self):
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]

    @classmethod
    def paper(cls, a_prior: str = "variance") -> "PriorSpec":
        """Priors used for the 1984-87 S&P500 evidence comparison.

        ``A ~ N(6, 0.05)`` is read with 0.05 as the variance by default;
        ``a_prior="sd"`` reads it as the standard deviation instead.
        """
        if a_prior not in ("variance", "sd"):
            raise ValueError("a_prior must be 'variance' or 'sd'")
        a_sd = math.sqrt(0.05) if a_prior == "variance" else 0.05
        return cls(
            mu=Normal(0.0003, 0.01),
            tau=Gamma(1.0, 1e5),
            alpha=Gamma(1.0, 0.05),
            A=Normal(6.0, a_sd),
            B=Gamma(1.0, 0.01),
            C=Uniform(0.0, 1.0),
            beta=Beta(40.0, 30.0),
            omega=Gamma(16.0, 0.4),
            phi=Uniform(0.0, 2.0 * math.pi),
            tc_minus_tN=Gamma(1.0, 30.0),
        )

    def replace(self, **changes) -> "PriorSpec":
        d = {k: v for k, v in self.items()}
        d.update(changes)
        return PriorSpec(**d)

    def to_dict(self) -> dict:
        return {k: _dist_to_dict(v) for k, v in self.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        base = cls.paper().to_dict()
        base.update(d)
        return cls(**{k: _dist_from_dict(v) for k, v in base.items()})


@dataclass
class ModelEvidence:
    model: str
    log_ml_estimates: list
    quantile_2_5: float
    quantile_97_5: float
    mc_samples_per_rep: int
    repetitions: int
    seed: int
    series_fingerprint: str = ""
    priors: dict = field(default_factory=dict)
    # repetition k draws from SeedSequence(seed).spawn(repetitions)[k]
    seed_derivation: str = "SeedSequence(seed).spawn(repetitions)"

    @property
    def mean(self) -> float:
        return float(np.mean(self.log_ml_estimates))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = self.mean
        return d


# --- likelihoods --------------------------------------------------------------


def _returns(series: PriceSeries) -> np.ndarray:
    return np.diff(series.log_price)


def adjusted_returns(series: PriceSeries, params: LpplParams, alpha: float) -> np.ndarray:
    """Returns with the mean-reversion pull removed: ``r[t] + alpha (q[t-1] - H(t-1))``."""
    q = series.log_price
    if not params.t_c > series.last_index:
        raise ValueError(f"t_c = {params.t_c} lies inside the series range")
    h = lppl_h(params, series.index[:-1])
    return np.diff(q) + alpha * (q[:-1] - h)


def _gaussian_ll(sq_sum, n, tau):
    return 0.5 * n * (np.log(tau) - LOG_2PI) - 0.5 * tau * sq_sum


def log_likelihood_batch(model: str, theta: dict, series: PriceSeries) -> np.ndarray:
    """Log-likelihoods for arrays of parameters (one entry per draw).

    ``theta`` maps the names in ``MODEL_PARAMETERS[model]`` to equal-length
    arrays; PL/LPPL also accept ``t_c`` in place of ``tc_minus_tN``.
    Non-finite values are returned as ``-inf``.
    """
    model = model.upper()
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    q = series.log_price
    n = len(q) - 1
    with np.errstate(all="ignore"):
        if model == "BS":
            mu = np.atleast_1d(np.asarray(theta["mu"], dtype=float))
            tau = np.atleast_1d(np.asarray(theta["tau"], dtype=float))
            r = _returns(series)
            # sum (r - mu)^2 = sum (r - rbar)^2 + n (rbar - mu)^2
            rbar = r.mean()
            ss = (r - rbar) @ (r - rbar) + n * (rbar - mu) ** 2
            ll = _gaussian_ll(ss, n, tau)
        else:
            get = lambda k: np.atleast_1d(np.asarray(theta[k], dtype=float))
            tau, alpha, A, B, beta = (get(k) for k in ("tau", "alpha", "A", "B", "beta"))
            t_c = get("t_c") if "t_c" in theta else series.last_index + get("tc_minus_tN")
            t = series.index
            log_dt = np.log(t_c[:, None] - t[None, :])
            f = np.exp(beta[:, None] * log_dt)
            if model == "LPPL":
                C, omega, phi = get("C"), get("omega"), get("phi")
                damp = C / np.sqrt(1.0 + (omega / beta) ** 2)
                f = f * (1.0 + damp[:, None] * np.cos(omega[:, None] * log_dt + phi[:, None]))
            nu = q[None, :] - (A[:, None] - B[:, None] * f)
            e = nu[:, 1:] - (1.0 - alpha[:, None]) * nu[:, :-1]
            ll = _gaussian_ll(np.einsum("ij,ij->i", e, e), n, tau)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    return ll


def log_likelihood(model: str, theta: dict, series: PriceSeries) -> float:
    """Log-likelihood of ``series`` returns at a single parameter point."""
    model = model.upper()
    if model in ("PL", "LPPL"):
        t_c = theta["t_c"] if "t_c" in theta else series.last_index + theta["tc_minus_tN"]
        if not t_c > series.last_index:
            raise ValueError("t_c must exceed the last index")
    ll = float(log_likelihood_batch(model, {k: [v] for k, v in theta.items()}, series)[0])
    if not math.isfinite(ll):
        raise EvidenceError("log-likelihood is not finite at this parameter point")
    return ll


# --- evidence --------------------------------------------------------------------


def sample_prior(model: str, priors: PriorSpec, size: int, rng) -> dict:
    """Draw ``size`` parameter vectors in a fixed parameter order."""
    return {k: getattr(priors, k).sample(rng, size) for k in MODEL_PARAMETERS[model.upper()]}


def log_mean_exp(ll) -> float:
    ll = np.asarray(ll, dtype=float)
    return float(logsumexp(ll) - math.log(len(ll)))


def _one_repetition(model, series, priors, mc_samples, seed_seq, batch):
    # draw everything up front so the batch size cannot change the stream
    theta = sample_prior(model, priors, mc_samples, make_rng(seed_seq))
    lls = np.empty(mc_samples)
    for lo in range(0, mc_samples, batch):
        hi = min(lo + batch, mc_samples)
        lls[lo:hi] = log_likelihood_batch(model, {k: v[lo:hi] for k, v in theta.items()}, series)
    if not np.any(np.isfinite(lls)):
        raise EvidenceError(
            f"all {mc_samples} sampled {model} likelihoods underflowed; the priors do not cover the data"
        )
    return log_mean_exp(lls)


def log_marginal_likelihood(model: str, series: PriceSeries, priors: PriorSpec | None = None,
                            mc_samples: int = 10_000, repetitions: int = 100, seed: int = 0,
                            batch: int = 1000, workers: int | None = None) -> ModelEvidence:
    """Prior-sampling Monte-Carlo estimate of the log marginal likelihood.

    Repetition ``k`` uses the ``k``-th child of ``SeedSequence(seed)``, so the
    result does not depend on ``workers``.
    """
    model = model.upper()
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if mc_samples < 100 or repetitions < 2:
        raise ValueError("need mc_samples >= 100 and repetitions >= 2")
    priors = priors or PriorSpec.paper()
    children = np.random.SeedSequence(seed).spawn(repetitions)
    run = lambda ss: _one_repetition(model, series, priors, mc_samples, ss, batch)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            estimates = list(pool.map(run, children))
    else:
        estimates = [run(ss) for ss in children]
    return ModelEvidence(
        model=model,
        log_ml_estimates=[float(x) for x in estimates],
        quantile_2_5=float(np.quantile(estimates, 0.025)),
        quantile_97_5=float(np.quantile(estimates, 0.975)),
        mc_samples_per_rep=mc_samples,
        repetitions=repetitions,
        seed=seed,
        series_fingerprint=series.fingerprint(),
        priors=priors.to_dict(),
    )


def log_bayes_factor(evidence_a: ModelEvidence, evidence_b: ModelEvidence) -> float:
    if evidence_a.series_fingerprint != evidence_b.series_fingerprint:
        raise EvidenceError("evidence was computed on different series")
    return evidence_a.mean - evidence_b.mean


def bayes_factor(evidence_a: ModelEvidence, evidence_b: ModelEvidence) -> float:
    """``exp(mean log-ML of a - mean log-ML of b)``."""
    return math.exp(log_bayes_factor(evidence_a, evidence_b))
