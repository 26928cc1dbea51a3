import math

import numpy as np
import pytest

from numsmooth import cli
from numsmooth.experiments import (
    CSV_COLUMNS,
    PRESETS,
    ExperimentConfig,
    ResultRow,
    UsageError,
    mc_baseline,
    parse_config,
    richardson_level1,
    rows_from_csv,
    rows_to_csv,
    run_experiment,
)

QUICK = """
# small one-step-pair GBM call
name = quick
method = asgq
payoff = call
N = 2
tol = 1e-3
"""


def test_richardson_examples():
    assert richardson_level1(1.0, 1.5) == 2.0
    assert richardson_level1(0.4, 0.4) == 0.4


def test_csv_round_trip():
    rows = [
        ResultRow("a", "asgq", "N=4", 1.25, 1.0, evals=10.0),
        ResultRow("b", "mlmc", "tol=0.01", 0.1 + 0.2, wall_s=0.5, beta=1.1),
    ]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == "# numsmooth-results v1"
    assert text.splitlines()[1] == ",".join(CSV_COLUMNS)
    back = rows_from_csv(text)
    assert back[0].rel_error == 0.25
    assert back[1].estimate == 0.1 + 0.2
    assert math.isnan(back[1].reference)
    assert [r.csv_fields() for r in back] == [r.csv_fields() for r in rows]


def test_config_parsing():
    cfg = parse_config(QUICK)
    assert cfg == ExperimentConfig("quick", "asgq", payoff="call", N=2, tol=1e-3)
    cfg = parse_config("preset = gbm-call-asgq\ntol = 0.01\nrichardson = off")
    assert cfg.tol == 0.01 and not cfg.richardson and cfg.N == 16
    for bad in ("name = x", "name = x\nmethod = asgq\ncolour = red", "preset = nope", "garbage",
                "name = x\nmethod = asgq\nN = four", "name = x\nmethod = mlmc\nrichardson = yes"):
        with pytest.raises(UsageError):
            parse_config(bad)


def test_config_validation():
    with pytest.raises(UsageError):
        ExperimentConfig("x", "mc", N=12)
    with pytest.raises(UsageError):
        ExperimentConfig("x", "asgq", payoff="density-point")
    with pytest.raises(UsageError):
        ExperimentConfig("x", "asgq", model="heston", payoff="basket-call")


def test_presets_are_valid():
    for name, cfg in PRESETS.items():
        assert cfg.name == name
        cfg.functional()


def test_constant_payoff_mc_is_exact():
    row, = mc_baseline(ExperimentConfig("c", "mc", payoff="constant", K=3.5, smoothing=False, N=8, tol=1e-3))
    assert row.estimate == 3.5 and row.stat_err == 0.0 and row.converged


def test_identical_seeds_identical_rows():
    cfg = ExperimentConfig("s", "mc", payoff="call", N=4, tol=5e-2, seed=9)
    a, b = mc_baseline(cfg)[0], mc_baseline(cfg)[0]
    assert a.estimate == b.estimate and a.stat_err == b.stat_err
    assert mc_baseline(cfg.with_(seed=10))[0].estimate != a.estimate


def test_mlmc_threads_invariant():
    cfg = PRESETS["gbm-digital-mlmc"].with_(tol=2e-2, screenFrom=-1)
    one, = run_experiment(cfg)
    two, = run_experiment(cfg.with_(threads=2))
    assert one.estimate == two.estimate


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESETS)


@pytest.mark.parametrize("argv", [
    ["run", "no-such-preset"],
    [],
    ["frobnicate"],
    ["run", "gbm-call-asgq", "--tol", "abc"],
    ["run", "gbm-call-asgq", "--threads", "0"],
    ["sweep", "gbm-call-asgq", "--tols", "1e-2"],
    ["sweep", "gbm-call-asgq", "--tols", "x,y"],
])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 2


def test_run_config_file_and_env_dir(tmp_path, monkeypatch, capsys):
    cfgfile = tmp_path / "quick.cfg"
    cfgfile.write_text(QUICK)
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    assert cli.main(["run", str(cfgfile)]) == 0
    assert cli.main(["run", str(cfgfile), "--tol", "1e-4"]) == 0
    text = (tmp_path / "out" / "quick.csv").read_text()
    # header written once, rows appended
    assert text.count("# numsmooth-results") == 1
    rows = rows_from_csv(text)
    assert len(rows) == 2 and all(r.method == "asgq" for r in rows)
    # one-step-pair Euler price of an ATM call, tight against the exact ASGQ limit
    assert rows[1].estimate == pytest.approx(rows[0].estimate, rel=1e-3)


def test_not_converged_exit_code(tmp_path, capsys):
    out = tmp_path / "r.csv"
    cfgfile = tmp_path / "tight.cfg"
    cfgfile.write_text("name = tight\nmethod = asgq\nmodel = heston\npayoff = digital\nN = 4\ntol = 1e-9\nmaxEvals = 200")
    assert cli.main(["run", str(cfgfile), "--out", str(out)]) == 3
    assert "[not converged]" in capsys.readouterr().out
    assert len(rows_from_csv(out.read_text())) == 1


def test_sweep_slope():
    from numsmooth.experiments import sweep

    cfg = parse_config(QUICK.replace("method = asgq", "method = mc").replace("N = 2", "N = 4"))
    rows = sweep(cfg, [1e-3, 5e-4, 2.5e-4])
    assert rows[-1].param == "slope"
    # plain MC: samples grow like tol^-2
    assert rows[-1].estimate == pytest.approx(-2.0, abs=0.3)
    assert np.all(np.diff([r.evals for r in rows[:-1]]) > 0)
