import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from lpplbubble.bayes import (
    EvidenceError,
    Gamma,
    ModelEvidence,
    Normal,
    PriorSpec,
    adjusted_returns,
    bayes_factor,
    log_bayes_factor,
    log_likelihood,
    log_likelihood_batch,
    log_marginal_likelihood,
    log_mean_exp,
    sample_prior,
)
from lpplbubble.lppl import LpplParams, OuResidualParams, draw_bubble_innovations, lppl_delta_h, lppl_h, make_rng, simulate_bubble
from lpplbubble.timeseries import PriceSeries
from oracles import quadrature_bs_evidence

N = 946
BUBBLE = LpplParams(A=6.0, B=0.01, C=0.5, beta=0.57, omega=6.4, phi=math.pi, t_c=N - 1 + 30.0)
RESID = OuResidualParams(0.05, 0.008)

COARSE = PriorSpec.paper().replace(mu=Normal(0.0, 0.02), tau=Gamma(2.0, 2000.0))
FIVE = PriceSeries.from_log_prices(np.cumsum([0.0, 0.012, -0.004, 0.007, 0.015, -0.009]))


def analytic_mu_bs_evidence(series, mu_prior, tau_prior):
    """mu integrated in closed form, tau by adaptive quadrature."""
    r = np.diff(series.log_price)
    n = len(r)
    ones = np.ones((n, n))

    def integrand(tau):
        cov = np.eye(n) / tau + mu_prior.sd**2 * ones
        return math.exp(stats.multivariate_normal.logpdf(r, np.full(n, mu_prior.mean), cov) + ref) \
            * stats.gamma.pdf(tau, tau_prior.shape, scale=tau_prior.scale)

    ref = 0.0
    ref = -stats.multivariate_normal.logpdf(r, np.full(n, mu_prior.mean), np.eye(n) / 4000 + mu_prior.sd**2 * ones)
    val, _ = integrate.quad(integrand, 0, np.inf, limit=500, epsabs=0, epsrel=1e-10)
    return math.log(val) - ref


def test_quadrature_oracles_agree():
    a = quadrature_bs_evidence(FIVE, COARSE.mu, COARSE.tau)
    b = analytic_mu_bs_evidence(FIVE, COARSE.mu, COARSE.tau)
    assert a == pytest.approx(b, abs=1e-4)


def test_bs_evidence_matches_quadrature():
    ev = log_marginal_likelihood("BS", FIVE, COARSE, mc_samples=10_000, repetitions=20, seed=3)
    assert abs(ev.mean - quadrature_bs_evidence(FIVE, COARSE.mu, COARSE.tau)) < 0.05


def test_point_mass_priors():
    s = PriceSeries.from_log_prices([4.0, 4.013])
    mu0, tau0 = 0.001, 9000.0
    priors = PriorSpec.paper().replace(mu=Normal(mu0, 1e-12), tau=Gamma(1e24, tau0 / 1e24))
    ev = log_marginal_likelihood("BS", s, priors, mc_samples=200, repetitions=2, seed=0)
    exact = stats.norm.logpdf(0.013, mu0, 1 / math.sqrt(tau0))
    assert_allclose(ev.log_ml_estimates, exact, atol=1e-6)


def test_bs_loglik_at_mle_matches_textbook():
    rng = np.random.default_rng(0)
    s = PriceSeries.from_log_prices(np.cumsum(rng.normal(3e-4, 0.01, 500)))
    r = np.diff(s.log_price)
    mu, var = r.mean(), r.var()
    expected = stats.norm.logpdf(r, mu, math.sqrt(var)).sum()
    assert log_likelihood("BS", {"mu": mu, "tau": 1 / var}, s) == pytest.approx(expected, abs=1e-8)


def direct_lppl_loglik(series, p, alpha, tau):
    q = series.log_price
    t = series.index
    h = lppl_h(p, t)
    mean = np.diff(h) - alpha * (q[:-1] - h[:-1])
    return stats.norm.logpdf(np.diff(q), mean, 1 / math.sqrt(tau)).sum()


def theta_of(p, alpha, tau, series):
    return {"tau": tau, "alpha": alpha, "A": p.A, "B": p.B, "C": p.C, "beta": p.beta,
            "omega": p.omega, "phi": p.phi, "tc_minus_tN": p.t_c - series.last_index}


@pytest.fixture(scope="module")
def bubble():
    return simulate_bubble(BUBBLE, RESID, N, 5.6, seed=1)


def test_lppl_loglik_matches_stepwise_density(bubble):
    p = BUBBLE.replace(A=6.05, C=0.3, omega=7.0)
    got = log_likelihood("LPPL", theta_of(p, 0.04, 1.2e4, bubble), bubble)
    assert got == pytest.approx(direct_lppl_loglik(bubble, p, 0.04, 1.2e4), rel=1e-10)
    # t_c may be given directly
    th = theta_of(p, 0.04, 1.2e4, bubble)
    th["t_c"] = p.t_c
    del th["tc_minus_tN"]
    assert log_likelihood("LPPL", th, bubble) == pytest.approx(got, rel=1e-12)


def test_nesting_lppl_c0_equals_pl(bubble):
    theta = sample_prior("LPPL", PriorSpec.paper(), 2000, make_rng(5))
    theta["C"] = np.zeros(2000)
    pl = {k: theta[k] for k in ("tau", "alpha", "A", "B", "beta", "tc_minus_tN")}
    a = log_likelihood_batch("LPPL", theta, bubble)
    b = log_likelihood_batch("PL", pl, bubble)
    assert np.all(np.isfinite(b))
    assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_b0_alpha0_reduces_to_driftless_bs(bubble):
    th = theta_of(BUBBLE.replace(B=0.0), 0.0, 1.5e4, bubble)
    lppl = log_likelihood("LPPL", th, bubble)
    assert lppl == pytest.approx(log_likelihood("BS", {"mu": 0.0, "tau": 1.5e4}, bubble), rel=1e-12)
    th["C"] = 0.0
    assert log_likelihood("PL", th, bubble) == pytest.approx(lppl, rel=1e-12)


def test_true_params_beat_bs_mle():
    wins = 0
    for seed in range(50):
        s = simulate_bubble(BUBBLE, RESID, N, 5.6, seed=seed)
        r = np.diff(s.log_price)
        bs = log_likelihood("BS", {"mu": r.mean(), "tau": 1 / r.var()}, s)
        wins += log_likelihood("LPPL", theta_of(BUBBLE, RESID.alpha, RESID.sigma_u**-2, s), s) > bs
    assert wins >= 48


def test_adjusted_returns_replay_innovations(bubble):
    adj = adjusted_returns(bubble, BUBBLE, RESID.alpha)
    u = draw_bubble_innovations(RESID, N, seed=1)
    assert_allclose(adj - lppl_delta_h(BUBBLE, bubble.index[:-1]), u, atol=1e-13, rtol=0)


def test_adjusted_returns_alpha_zero(bubble):
    assert_array_equal(adjusted_returns(bubble, BUBBLE, 0.0), np.diff(bubble.log_price))
    with pytest.raises(ValueError):
        adjusted_returns(bubble, BUBBLE.replace(t_c=900.0), 0.03)


def test_log_mean_exp_shift_invariance():
    ll = make_rng(2).normal(-3000, 40, 10_000)
    base = log_mean_exp(ll)
    for c in (-1e4, -3000.0, 0.0, 512.25, 1e5):
        assert log_mean_exp(ll - c) + c == pytest.approx(base, abs=1e-10)
    assert log_mean_exp([0.0, -np.inf]) == pytest.approx(math.log(0.5))


def test_evidence_deterministic_and_worker_independent(bubble):
    kw = dict(mc_samples=500, repetitions=4, seed=11)
    a = log_marginal_likelihood("LPPL", bubble, **kw)
    b = log_marginal_likelihood("LPPL", bubble, **kw)
    c = log_marginal_likelihood("LPPL", bubble, workers=3, batch=128, **kw)
    assert a.log_ml_estimates == b.log_ml_estimates == c.log_ml_estimates
    assert len(a.log_ml_estimates) == 4
    assert a.quantile_2_5 == pytest.approx(np.quantile(a.log_ml_estimates, 0.025))
    assert a.quantile_2_5 <= a.quantile_97_5
    d = log_marginal_likelihood("LPPL", bubble, mc_samples=500, repetitions=4, seed=12)
    assert d.log_ml_estimates != a.log_ml_estimates


def test_shrinking_priors_approach_point_loglik():
    rng = np.random.default_rng(8)
    s = PriceSeries.from_log_prices(np.cumsum(rng.normal(4e-4, 0.01, 200)))
    r = np.diff(s.log_price)
    mu, tau = r.mean(), 1 / r.var()
    target = log_likelihood("BS", {"mu": mu, "tau": tau}, s)
    gaps = []
    for rel in (0.3, 0.03, 0.003):
        shape = rel**-2
        priors = PriorSpec.paper().replace(mu=Normal(mu, rel * 0.01), tau=Gamma(shape, tau / shape))
        ev = log_marginal_likelihood("BS", s, priors, mc_samples=4000, repetitions=4, seed=0)
        gaps.append(abs(ev.mean - target))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.01


def test_underflow_is_reported():
    s = PriceSeries.from_log_prices([0.0, 1e200])
    with pytest.raises(EvidenceError, match="underflow"):
        log_marginal_likelihood("BS", s, mc_samples=100, repetitions=2)


def test_argument_validation(bubble):
    with pytest.raises(ValueError):
        log_marginal_likelihood("BS", bubble, mc_samples=10, repetitions=2)
    with pytest.raises(ValueError):
        log_marginal_likelihood("BS", bubble, mc_samples=100, repetitions=1)
    with pytest.raises(ValueError):
        log_marginal_likelihood("GARCH", bubble, mc_samples=100, repetitions=2)


def _ev(values, fp="x"):
    return ModelEvidence("BS", list(values), 0.0, 0.0, 100, len(values), 0, series_fingerprint=fp)


def test_bayes_factor():
    assert bayes_factor(_ev([3.0, 5.0]), _ev([4.0, 4.0])) == 1.0
    assert bayes_factor(_ev([10.0, 12.0]), _ev([6.0, 6.0])) == pytest.approx(math.exp(5), rel=1e-12)
    assert math.exp(5) == pytest.approx(148.4, abs=0.05)
    assert log_bayes_factor(_ev([1.0, 2.0]), _ev([0.0, 0.0])) == 1.5
    with pytest.raises(EvidenceError):
        bayes_factor(_ev([1.0, 1.0], "a"), _ev([1.0, 1.0], "b"))


def test_paper_priors():
    p = PriorSpec.paper()
    assert (p.mu.mean, p.mu.sd) == (0.0003, 0.01)
    assert (p.tau.shape, p.tau.scale) == (1.0, 1e5)
    assert (p.alpha.shape, p.alpha.scale) == (1.0, 0.05)
    assert (p.A.mean, p.A.sd) == (6.0, pytest.approx(math.sqrt(0.05)))
    assert PriorSpec.paper(a_prior="sd").A.sd == 0.05
    assert (p.B.shape, p.B.scale) == (1.0, 0.01)
    assert (p.C.low, p.C.high) == (0.0, 1.0)
    assert (p.beta.a, p.beta.b) == (40.0, 30.0)
    assert (p.omega.shape, p.omega.scale) == (16.0, 0.4)
    assert (p.phi.low, p.phi.high) == (0.0, pytest.approx(2 * math.pi))
    assert (p.tc_minus_tN.shape, p.tc_minus_tN.scale) == (1.0, 30.0)
    assert PriorSpec.from_dict(p.to_dict()) == p
    # Gamma moments follow the shape-scale reading
    x = p.omega.sample(make_rng(0), 200_000)
    assert x.mean() == pytest.approx(6.4, rel=0.01)
    assert x.var() == pytest.approx(16 * 0.4**2, rel=0.02)
    with pytest.raises(ValueError):
        p.replace(tau=Gamma(-1.0, 1.0))
    with pytest.raises(ValueError):
        PriorSpec.paper(a_prior="precision")


def test_evidence_serialises(bubble):
    ev = log_marginal_likelihood("PL", bubble, mc_samples=200, repetitions=2, seed=1)
    d = ev.as_dict()
    assert d["model"] == "PL" and d["seed"] == 1 and len(d["log_ml_estimates"]) == 2
    assert d["priors"]["beta"] == {"dist": "beta", "a": 40.0, "b": 30.0}
    assert d["series_fingerprint"] == bubble.fingerprint()
