import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lpplbubble.bayes import Gamma, Normal, PriorSpec, log_marginal_likelihood
from lpplbubble.cli import build_parser, main
from lpplbubble.lppl import PAPER_GARCH, LpplParams, lppl_h, simulate_garch
from lpplbubble.timeseries import ingest_csv, write_csv
from oracles import quadrature_bs_evidence


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_defaults(capsys):
    parser = build_parser()
    texts = {}
    for name in ("fit", "scan", "sim", "bayes", "residual-test"):
        with pytest.raises(SystemExit):
            parser.parse_args([name, "--help"])
        texts[name] = capsys.readouterr().out
    assert "(default: 750)" in texts["scan"] and "25 sliding, 5 shrinking" in texts["scan"]
    assert "(default: 10000)" in texts["bayes"] and "(default: 100)" in texts["bayes"]
    assert "(default: 252)" in texts["fit"]
    assert "(default: 0.926)" in texts["sim"] and "(default: 0.07)" in texts["sim"]


def test_sim_garch_is_reproducible(tmp_path, capsys):
    for prefix in ("a", "b"):
        assert run(capsys, "sim", "--model", "garch", "--count", 3, "--seed", 7, "--out", tmp_path / prefix)[0] == 0
    for k in range(3):
        assert (tmp_path / f"a_{k:04d}.csv").read_bytes() == (tmp_path / f"b_{k:04d}.csv").read_bytes()
    man = json.loads((tmp_path / "a.manifest.json").read_text())
    assert man["seed"] == 7 and len(man["outputs"]) == 3 and "timestamp" in man


def test_sim_noiseless_bubble_is_trajectory(tmp_path, capsys):
    code, _, _ = run(capsys, "sim", "--model", "bubble", "--sigma-u", 0, "--length", 300,
                     "--tc-beyond-end", 40, "--write-log", "--out", tmp_path / "b")
    assert code == 0
    s = ingest_csv(tmp_path / "b_0000.csv", price_column="log_close", transform="as-is")
    p = LpplParams(A=7.2, B=0.0833, C=0.782, beta=0.3795, omega=6.3787, phi=4.3364, t_c=299 + 40.0)
    assert_allclose(s.log_price, lppl_h(p, np.arange(300)), atol=1e-12, rtol=0)


@pytest.fixture(scope="module")
def bubble_fit(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    assert main(["sim", "--model", "bubble", "--sigma-u", "0", "--length", "946",
                 "--out", str(d / "bub")]) == 0
    assert main(["fit", "--input", str(d / "bub_0000.csv"), "--plot-data"]) == 0
    return d


def test_fit_recovers_generator(bubble_fit):
    out = json.loads((bubble_fit / "bub_0000.fit.json").read_text())
    p = out["fit"]["params"]
    assert out["fit"]["qualified"]
    assert abs(p["beta"] - 0.3795) < 1e-3 and abs(p["omega"] - 6.3787) < 1e-2
    assert abs(p["t_c"] - (945 + 50)) < 0.5
    assert out["manifest"]["command"] == "fit" and "timestamp" not in out["manifest"]
    assert len(out["diagnostics"]["pacf"]["values"]) == 20


def test_fit_output_is_byte_identical(bubble_fit, tmp_path, capsys):
    assert run(capsys, "fit", "--input", bubble_fit / "bub_0000.csv", "--out", tmp_path / "again")[0] == 0
    a = json.loads((bubble_fit / "bub_0000.fit.json").read_text())
    b = json.loads((tmp_path / "again.fit.json").read_text())
    assert a["fit"] == b["fit"] and a["diagnostics"] == b["diagnostics"]
    assert a["manifest"]["inputs"] == b["manifest"]["inputs"]


def test_plot_data_columns(bubble_fit):
    lines = (bubble_fit / "bub_0000.plotdata.csv").read_text().splitlines()
    assert lines[0] == "t,date,ln_I,H,nu,pacf_lag,pacf_value,pacf_band"
    assert len(lines) == 947
    assert lines[20].split(",")[5] == "20" and lines[21].split(",")[5] == ""


def test_residual_test_on_plot_data(bubble_fit, capsys):
    code, _, _ = run(capsys, "residual-test", "--input", bubble_fit / "bub_0000.plotdata.csv",
                     "--out", bubble_fit / "res")
    # a noiseless fit leaves rounding-level residuals, still a valid series
    assert code in (0, 2)
    code, _, err = run(capsys, "residual-test", "--input", bubble_fit / "bub_0000.plotdata.csv",
                       "--column", "missing")
    assert code == 2 and json.loads(err)["exit_code"] == 2


def test_residual_test_reports(tmp_path, capsys):
    rng = np.random.default_rng(0)
    nu = np.zeros(946)
    for t in range(1, 946):
        nu[t] = 0.97 * nu[t - 1] + rng.normal(0, 0.008)
    path = tmp_path / "r.csv"
    path.write_text("nu\n" + "\n".join(repr(float(x)) for x in nu) + "\n")
    assert run(capsys, "residual-test", "--input", path)[0] == 0
    out = json.loads((tmp_path / "r.residuals.json").read_text())["diagnostics"]
    assert out["phillips_perron"]["reject"]["0.001"] is True
    assert set(out["dickey_fuller"]["critical_values"]) == {"0.001", "0.01", "0.05"}


def test_fit_constant_series_exit_3(tmp_path, capsys):
    dates = np.arange(np.datetime64("2001-01-01"), np.datetime64("2001-01-01") + 200)
    path = tmp_path / "const.csv"
    path.write_text("date,close\n" + "".join(f"{d},100\n" for d in dates))
    code, _, err = run(capsys, "fit", "--input", path)
    assert code == 3
    e = json.loads(err)
    assert e["error"] == "DegenerateSeriesError" and e["exit_code"] == 3


def test_input_errors_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--input", tmp_path / "missing.csv")
    assert code == 2 and "no such file" in json.loads(err)["message"]
    bad = tmp_path / "bad.csv"
    bad.write_text("date,close\n2001-01-02,100\n2001-01-03,x\n")
    code, _, err = run(capsys, "fit", "--input", bad)
    assert code == 2 and "row 3" in json.loads(err)["message"]
    code, _, _ = run(capsys, "scan", "--mode", "garch", "--levels", "0.2", "--count", 1)
    assert code == 2


def test_config_precedence(tmp_path, capsys):
    s = simulate_garch(PAPER_GARCH, 300, 4.0, seed=1)
    write_csv(s, tmp_path / "g.csv")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tc-max": 100, "max_iterations": 500}))
    assert run(capsys, "fit", "--input", tmp_path / "g.csv", "--config", cfg, "--tc-max", 120)[0] == 0
    man = json.loads((tmp_path / "g.fit.json").read_text())["manifest"]["config"]
    assert man["tc_max"] == 120 and man["max_iterations"] == 500 and man["optimizer"] == "simplex"


def test_sliding_scan_boundary(tmp_path, capsys):
    write_csv(simulate_garch(PAPER_GARCH, 760, 4.0, seed=2), tmp_path / "s.csv")
    code, out, _ = run(capsys, "scan", "--input", tmp_path / "s.csv", "--mode", "sliding",
                       "--window", 750, "--step", 25)
    assert code == 0 and json.loads(out)["windows"] == 1
    rows = (tmp_path / "s.scan.csv").read_text().splitlines()
    assert len(rows) == 2


def test_sim_then_scan_matches_ensemble(tmp_path, capsys):
    """Files written by sim and the in-process GARCH ensemble share one seed tree."""
    assert run(capsys, "sim", "--model", "garch", "--length", 750, "--count", 2, "--seed", 3,
               "--out", tmp_path / "g")[0] == 0
    files = [tmp_path / "g_0000.csv", tmp_path / "g_0001.csv"]
    assert run(capsys, "scan", "--mode", "files", "--input", *files, "--out", tmp_path / "f")[0] == 0
    assert run(capsys, "scan", "--mode", "garch", "--length", 750, "--count", 2, "--seed", 3,
               "--out", tmp_path / "e")[0] == 0
    f = json.loads((tmp_path / "f.scan.json").read_text())
    e = json.loads((tmp_path / "e.scan.json").read_text())
    # prices pass through exp/log on disk, so compare to optimizer precision
    for vf, ve in zip(f["verdicts"], e["verdicts"]):
        assert vf["qualified"] == ve["qualified"]
        assert vf["params"]["beta"] == pytest.approx(ve["params"]["beta"], abs=1e-4)
    assert f["p_lppl"] == e["p_lppl"]


def test_default_priors_file(tmp_path, capsys):
    path = tmp_path / "priors.json"
    assert run(capsys, "bayes", "--write-default-priors", path)[0] == 0
    d = json.loads(path.read_text())
    assert PriorSpec.from_dict(d) == PriorSpec.paper()
    assert d["mu"] == {"dist": "normal", "mean": 0.0003, "sd": 0.01}
    assert d["tau"] == {"dist": "gamma", "shape": 1.0, "scale": 100000.0}
    assert d["tc_minus_tN"] == {"dist": "gamma", "shape": 1.0, "scale": 30.0}
    assert d["A"]["sd"] == pytest.approx(math.sqrt(0.05))


def test_bayes_small_run_matches_quadrature(tmp_path, capsys):
    s = simulate_garch(PAPER_GARCH, 10, 5.0, seed=1)
    write_csv(s, tmp_path / "ten.csv")
    priors = PriorSpec.paper().replace(mu=Normal(0.0, 0.005), tau=Gamma(5.0, 1600.0))
    (tmp_path / "p.json").write_text(json.dumps(priors.to_dict()))
    code, _, _ = run(capsys, "bayes", "--input", tmp_path / "ten.csv", "--priors", tmp_path / "p.json",
                     "--models", "bs", "--samples", 100, "--reps", 2, "--seed", 0)
    assert code == 0
    out = json.loads((tmp_path / "ten.bayes.json").read_text())
    est = out["evidence"]["BS"]["log_ml_estimates"]
    series = ingest_csv(tmp_path / "ten.csv")
    direct = log_marginal_likelihood("BS", series, priors, 100, 2, 0)
    assert est == direct.log_ml_estimates
    assert abs(np.mean(est) - quadrature_bs_evidence(series, priors.mu, priors.tau)) < 0.1


def test_bayes_bad_model_and_priors(tmp_path, capsys):
    write_csv(simulate_garch(PAPER_GARCH, 20, 5.0, seed=1), tmp_path / "x.csv")
    assert run(capsys, "bayes", "--input", tmp_path / "x.csv", "--models", "garch")[0] == 2
    (tmp_path / "p.json").write_text('{"tau": {"dist": "gamma", "shape": -1, "scale": 1}}')
    assert run(capsys, "bayes", "--input", tmp_path / "x.csv", "--priors", tmp_path / "p.json")[0] == 2
