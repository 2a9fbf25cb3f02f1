import io
import json

import numpy as np
import pandas as pd
import pytest

from trawlkit import dispatch, exit_code_for
from utils.series_utils import TimeSeries, parse_series
from utils.utils import CellRunError, ConfigurationError, DegenerateEstimateError, InsufficientDataError


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(json.dumps({"trawl": {"kind": "exp", "lambda": 1.0},
                                "marginal": {"kind": "negbin", "theta": 0.2},
                                "delta": 0.1, "n": 300, "tail_cutoff": 5.0}))
    return str(path)


@pytest.fixture
def simulated(tmp_path, sim_config):
    out = tmp_path / "path.csv"
    assert dispatch(["--quiet", "--seed", "3", "simulate", "--config", sim_config, "--out", str(out)]) == 0
    return str(out)


def test_help_and_usage_errors(capsys):
    assert dispatch(["--help"]) == 0
    assert dispatch(["estimate", "--bogus"]) == 2
    assert dispatch([]) == 2


def test_short_series_is_a_data_error(series_file, capsys):
    path = series_file(TimeSeries(1.0, [1.0, 2.0]))
    assert dispatch(["--quiet", "estimate", "--in", path]) == 3
    assert "insufficient data" in capsys.readouterr().err


def test_malformed_series_is_a_data_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("time,value\n0,1\n1,x\n2,3\n")
    assert dispatch(["--quiet", "estimate", "--in", str(path)]) == 3


def test_simulate_is_reproducible(tmp_path, sim_config, simulated):
    again = tmp_path / "again.csv"
    assert dispatch(["--quiet", "--seed", "3", "simulate", "--config", sim_config, "--out", str(again)]) == 0
    assert again.read_text() == open(simulated).read()
    series = parse_series(simulated)
    assert series.n == 300 and series.delta == 0.1


def test_simulate_overrides_n(capsys, sim_config):
    assert dispatch(["--quiet", "simulate", "--config", sim_config, "--n", "20"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# delta=0.1" and lines[1] == "time,value"
    assert len(lines) == 22


def test_estimate_writes_the_table(capsys, simulated):
    assert dispatch(["--quiet", "--precision", "4", "estimate", "--in", simulated, "--max-lag", "5"]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert list(frame.columns) == ['t', 'a_hat', 'a_hat_bc', 'a_prime', 'sigma2', 'ci_lo', 'ci_hi', 'flag']
    assert len(frame) == 6


def test_estimate_offset_does_not_change_the_trawl(capsys, simulated):
    dispatch(["--quiet", "--precision", "12", "estimate", "--in", simulated, "--max-lag", "3"])
    plain = capsys.readouterr().out
    dispatch(["--quiet", "--precision", "12", "estimate", "--in", simulated, "--max-lag", "3", "--offset", "0.8"])
    shifted = capsys.readouterr().out
    a = pd.read_csv(io.StringIO(plain))["a_hat"]
    b = pd.read_csv(io.StringIO(shifted))["a_hat"]
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)


def test_slices(capsys, simulated):
    assert dispatch(["--quiet", "slices", "--in", simulated, "--h", "0.1,1", "--method", "acf,trawl_sum"]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(frame) == 4
    assert ((frame.ratio_cap >= 0) & (frame.ratio_cap <= 1)).all()


def test_unknown_slice_method_is_a_usage_error(simulated):
    assert dispatch(["--quiet", "slices", "--in", simulated, "--h", "0.1", "--method", "kernel"]) == 2


def test_forecast(capsys, simulated):
    code = dispatch(["--quiet", "--jobs", "1", "forecast", "--in", simulated, "--window", "100", "--hmax", "3",
                     "--predictors", "trawl,naive", "--dm-power", "2"])
    assert code == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(frame) == 3 * 2
    assert set(frame.benchmark) == {"trawl"}


def test_forecast_needs_enough_data(simulated, capsys):
    assert dispatch(["--quiet", "forecast", "--in", simulated, "--window", "299", "--hmax", "3"]) == 3
    assert "need at least" in capsys.readouterr().err


def test_dm_test(tmp_path, capsys):
    rng = np.random.default_rng(4)
    path = tmp_path / "errors.csv"
    pd.DataFrame({"trawl": rng.normal(0, 1, 200), "naive": rng.normal(0, 2, 200)}).to_csv(path, index=False)
    assert dispatch(["--quiet", "dm-test", "--in", str(path), "--col-a", "trawl", "--col-b", "naive"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "statistic,p_value,stars,dominance"
    stat, p, stars, dominance = lines[1].split(",")
    assert float(stat) < 0 and float(p) < 0.001 and stars == "***" and dominance == "0"
    assert dispatch(["--quiet", "dm-test", "--in", str(path), "--col-a", "trawl", "--col-b", "other"]) == 3


def test_mc_cell(tmp_path, capsys):
    cell = tmp_path / "cell.json"
    cell.write_text(json.dumps({"trawl": {"kind": "exp", "lambda": 1.0},
                                "marginal": {"kind": "negbin", "theta": 0.2},
                                "delta": 0.1, "n": 150, "runs": 50, "tail_cutoff": 4.0,
                                "report": {"fixed_t": [0.0, 1.0]}}))
    assert dispatch(["--quiet", "--jobs", "1", "mc", "--config", str(cell), "--runs", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,n,mean,bias,sd,mean_bc,bias_bc,sd_bc"
    assert len(lines) == 3

    assert dispatch(["--quiet", "--jobs", "1", "mc-coverage", "--config", str(cell), "--runs", "2"]) == 0
    assert capsys.readouterr().out.startswith("t,n,subset,degenerate")

    assert dispatch(["--quiet", "--jobs", "1", "mc", "--config", str(cell), "--runs", "2",
                     "--layout", "slices"]) == 2


def test_bad_config_is_a_usage_error(tmp_path):
    cell = tmp_path / "cell.json"
    cell.write_text("{not json")
    assert dispatch(["--quiet", "mc", "--config", str(cell)]) == 2
    assert dispatch(["--quiet", "mc", "--config", str(tmp_path / "missing.json")]) == 2


def test_exit_codes_of_cell_failures():
    assert exit_code_for(CellRunError(3, DegenerateEstimateError("zero"))) == 4
    assert exit_code_for(CellRunError(3, InsufficientDataError("short"))) == 3
    assert exit_code_for(ConfigurationError("bad")) == 2
    assert exit_code_for(DegenerateEstimateError("zero")) == 4
