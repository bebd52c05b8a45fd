import json
import re

import numpy as np
import pandas as pd
import pytest

from ecomem import cli
from ecomem.cli import main
from ecomem.io import read_fit, write_chains, write_meta
from ecomem.sampler import ChainSet

FAST = ["--chains", "2", "--iters", "300", "--burn-in", "150", "--thin", "1"]
CANONICAL_CALL = ["--formula", "y ~ v1*v2 + v2*v3", "--family", "poisson", "--mem-vars", "v1,v2", "--lags", "10,6"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--scenario", "canonical", "--out", str(d / "sim")]) == 0
    code = main(["fit", "--data", str(d / "sim" / "data.csv"), *CANONICAL_CALL, *FAST,
                 "--group-id", "group", "--out", str(d / "fit")])
    assert code in (0, 3)
    code = main(["fit", "--data", str(d / "sim" / "data.csv"), *CANONICAL_CALL[:6], "--lags", "0,0",
                 *FAST, "--out", str(d / "base")])
    assert code in (0, 3)
    return d


def test_chain_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cs = ChainSet(["mu", "w.a.0", "w.a.1"], rng.normal(size=(2, 5, 3)) / 7, [{}, {}], [0, 1],
                  {"n_chains": 2})
    write_chains(cs, tmp_path)
    write_meta({"sampler": {"n_chains": 2}}, tmp_path)
    back, meta = read_fit(tmp_path)
    np.testing.assert_array_equal(back.draws, cs.draws)
    assert back.names == cs.names


def test_simulate_outputs(workdir, tmp_path):
    df = pd.read_csv(workdir / "sim" / "data.csv")
    assert len(df) == 120
    truth = json.loads((workdir / "sim" / "truth.json").read_text())
    assert set(truth["weights"]) == {"v1", "v2"}
    assert main(["simulate", "--scenario", "canonical", "--out", str(tmp_path / "again")]) == 0
    for f in ("data.csv", "truth.json"):
        assert (tmp_path / "again" / f).read_bytes() == (workdir / "sim" / f).read_bytes()


def test_simulate_from_file(tmp_path):
    from ecomem.simulate import canonical_scenario

    p = tmp_path / "scen.json"
    sc = canonical_scenario()
    sc.T = 30
    p.write_text(json.dumps(sc.to_dict()))
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert len(pd.read_csv(tmp_path / "o" / "data.csv")) == 30


def test_missing_scenario(tmp_path, capsys):
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_fit_outputs(workdir):
    meta = json.loads((workdir / "fit" / "fit_meta.json").read_text())
    for key in ("formula", "seeds", "standardization", "designs", "acceptance", "wall_time_s", "sampler"):
        assert key in meta
    assert meta["designs"]["v1"]["knots"]
    header = (workdir / "fit" / "chain_0.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "mu" and "w.v1.10" in header and "w.v2.6" in header


def test_lag_list_mismatch(workdir, capsys):
    code = main(["fit", "--data", str(workdir / "sim" / "data.csv"), "--formula", "y ~ v1*v2 + v2*v3",
                 "--family", "poisson", "--mem-vars", "v1,v2", "--lags", "10", "--out", str(workdir / "x")])
    assert code == 2
    assert "lags" in capsys.readouterr().err


def test_validation_error_exit(tmp_path, capsys):
    pd.DataFrame({"time": [1, 2, 4, 5, 6, 7], "y": [1, 2, 3, 4, 5, 6], "x": [0.1, 0.5, 0.2, 0.3, 0.9, 0.4]}).to_csv(
        tmp_path / "d.csv", index=False)
    code = main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "y ~ x", "--family", "gaussian",
                 "--mem-vars", "x", "--lags", "1", "--out", str(tmp_path / "f")])
    assert code == 2
    assert "time" in capsys.readouterr().err


def test_gaussian_linear_model(tmp_path):
    rng = np.random.default_rng(1)
    T = 60
    ftc = rng.binomial(1, 0.3, T)
    df = pd.DataFrame({"time": np.arange(T), "gr": rng.normal(size=T), "age": rng.normal(size=T), "ftc": ftc})
    df.to_csv(tmp_path / "d.csv", index=False)
    code = main(["fit", "--data", str(tmp_path / "d.csv"), "--formula", "gr ~ age + ftc", "--family", "gaussian",
                 "--mem-vars", "ftc", "--lags", "12", *FAST, "--out", str(tmp_path / "f")])
    assert code in (0, 3)
    meta = json.loads((tmp_path / "f" / "fit_meta.json").read_text())
    assert meta["covariate_kinds"]["ftc"] == "binary"
    assert "sigma2" in meta["names"]


def test_rhat_warning_exit_code(workdir, monkeypatch, tmp_path):
    def fake_run(model, sconfig, initial_state=None):
        from ecomem.sampler import draw_names

        names = draw_names(model)
        draws = np.random.default_rng(0).normal(size=(2, 50, len(names)))
        draws[1] += 10.0
        return ChainSet(names, draws, [{}, {}], [0, 1], sconfig.to_dict())

    monkeypatch.setattr(cli, "run_chains", fake_run)
    code = main(["fit", "--data", str(workdir / "sim" / "data.csv"), *CANONICAL_CALL, "--chains", "2",
                 "--out", str(tmp_path / "f")])
    assert code == 3
    assert (tmp_path / "f" / "chain_1.csv").exists()


def test_summary(workdir, tmp_path):
    out = tmp_path / "s"
    assert main(["summary", "--fit", str(workdir / "fit"), "--cred", "0.99", "--out", str(out)]) == 0
    summ = pd.read_csv(out / "summary.csv", float_precision="round_trip")
    chains, _ = read_fit(workdir / "fit")
    mu = chains.pooled("mu")
    row = summ.set_index("name").loc["mu"]
    assert row["lower"] == np.quantile(mu, 0.005)
    assert row["upper"] == np.quantile(mu, 0.995)
    mem = pd.read_csv(out / "memory_v1.csv")
    assert list(mem["lag"]) == list(range(11))
    assert (out / "memory_v2.csv").exists()


def test_summary_empty_dir(tmp_path):
    assert main(["summary", "--fit", str(tmp_path)]) == 2


def test_plot(workdir, tmp_path):
    svg_path = tmp_path / "m.svg"
    assert main(["plot", "--fit", str(workdir / "fit"), "--out", str(svg_path),
                 "--truth", str(workdir / "sim" / "truth.json"), "--cred", "0.9"]) == 0
    svg = svg_path.read_text()
    assert svg.count('<g class="panel"') == 2
    assert svg.count('class="truth"') == 2
    assert "90% credible band" in svg
    assert svg.count('class="threshold"') == 2
    plain = tmp_path / "p.svg"
    assert main(["plot", "--fit", str(workdir / "fit"), "--out", str(plain)]) == 0
    assert 'class="truth"' not in plain.read_text()


def test_plot_missing_fit(tmp_path):
    assert main(["plot", "--fit", str(tmp_path / "none"), "--out", str(tmp_path / "x.svg")]) == 2


def _polyline(svg, cls):
    return re.search(rf'class="density {cls}" points="([^"]+)"', svg).group(1)


def test_compare(workdir, tmp_path):
    same = tmp_path / "same.svg"
    assert main(["compare", "--fit", str(workdir / "fit"), "--baseline", str(workdir / "fit"),
                 "--term", "v2", "--out", str(same)]) == 0
    svg = same.read_text()
    assert _polyline(svg, "memory") == _polyline(svg, "baseline")
    diff = tmp_path / "diff.svg"
    assert main(["compare", "--fit", str(workdir / "fit"), "--baseline", str(workdir / "base"),
                 "--term", "v1:v2", "--out", str(diff)]) == 0
    assert _polyline(diff.read_text(), "memory") != _polyline(diff.read_text(), "baseline")


def test_compare_bad_term(workdir, tmp_path):
    assert main(["compare", "--fit", str(workdir / "fit"), "--baseline", str(workdir / "base"),
                 "--term", "zz", "--out", str(tmp_path / "c.svg")]) == 2


def test_idempotent_fit(workdir, tmp_path):
    args = ["fit", "--data", str(workdir / "sim" / "data.csv"), *CANONICAL_CALL, *FAST, "--group-id", "group"]
    main(args + ["--out", str(tmp_path / "a")])
    for c in range(2):
        a = (tmp_path / "a" / f"chain_{c}.csv").read_bytes()
        assert a == (workdir / "fit" / f"chain_{c}.csv").read_bytes()
