import io
import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from main import EXIT_CONFIG_ERROR, EXIT_OK, cli
from verify_harness import default_params_grid

TINY_CHANNEL = {
    "cells": 8,
    "t_end": 0.05,
    "params": {"mu1": 1.0, "mu2": 0.5, "nu": 1.0, "tau_star": 0.1},
    "ledger_every": 10,
}


@pytest.fixture
def runner():
    return CliRunner()


def test_verify_monotonicity_exits_zero(runner, tmp_path):
    out = tmp_path / "reports"
    result = runner.invoke(cli, ["verify", "--suite", "monotonicity", "--seed", "7", "--samples", "20",
                                 "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((out / "monotonicity.json").read_text())
    assert report["status"] == "passed"
    assert report["seed"] == 7
    assert "monotonicity: passed" in result.output


@pytest.mark.parametrize("suite, samples, status", [
    ("gradient", 40, "passed"),
    ("geometry", 120, "passed"),
    ("implicit_law", 200, "passed"),
    ("flow_stress_floor", 200, "measured"),
])
def test_verify_suite_status(runner, tmp_path, suite, samples, status):
    out = tmp_path / "reports"
    result = runner.invoke(cli, ["verify", "--suite", suite, "--seed", "7", "--samples", str(samples),
                                 "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    report = json.loads((out / f"{suite}.json").read_text())
    assert report["status"] == status, report["failures"][:1]
    assert report["samples"] > 0
    assert f"{suite}: {status}" in result.output


@pytest.mark.slow
def test_verify_acceptance_profile(runner, tmp_path):
    out = tmp_path / "reports"
    result = runner.invoke(cli, ["verify", "--acceptance", "--suite", "coercivity", "--suite", "stress_bound",
                                 "--seed", "7", "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    points = len(default_params_grid())
    for suite in ("coercivity", "stress_bound"):
        report = json.loads((out / f"{suite}.json").read_text())
        assert report["status"] == "passed", report["failures"][:1]
        assert report["samples"] >= 100_000 * points


def test_verify_reports_are_byte_identical(runner, tmp_path):
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli, ["verify", "--suite", "stress_bound", "--seed", "7", "--samples", "10",
                                     "--out", str(out)])
        assert result.exit_code == EXIT_OK, result.output
        texts.append((out / "stress_bound.json").read_bytes())
    assert texts[0] == texts[1]


def test_missing_mu1_is_a_config_error(runner, write_config, tmp_path):
    path = write_config({"params": {"tau_star": 0.1}})
    result = runner.invoke(cli, ["run-channel", "--config", str(path), "--out", str(tmp_path / "run")])

    assert result.exit_code == EXIT_CONFIG_ERROR
    assert "params.mu1" in result.output


def test_unreadable_config_is_a_config_error(runner, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    result = runner.invoke(cli, ["run-channel", "--config", str(path), "--out", str(tmp_path / "run")])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_eval_stress_table(runner, write_config, tmp_path):
    config = write_config({"params": {"mu1": 1.0, "tau_star": 1.0}, "dim": 2, "reg_n": 100})
    matrices = tmp_path / "X.csv"
    matrices.write_text("x11,x12,x21,x22\n0,1,1,0\n0,0,0,0\n")
    result = runner.invoke(cli, ["--quiet", "eval-stress", "--config", str(config), "--input", str(matrices)])

    assert result.exit_code == EXIT_OK, result.output
    assert result.output.startswith("# yield-stress-lab")
    table = pd.read_csv(io.StringIO(result.output), comment="#")
    assert list(table["plug_flag"]) == [0, 1]
    assert table.loc[0, "S12"] == pytest.approx(1.0 + 1.0 / np.sqrt(2.0))
    assert np.isnan(table.loc[1, "S12"])
    assert table.loc[1, "Sn12"] == 0.0


def test_eval_stress_dimension_mismatch(runner, write_config, tmp_path):
    config = write_config({"params": {"mu1": 1.0}, "dim": 3})
    matrices = tmp_path / "X.csv"
    matrices.write_text("x11,x12,x21,x22\n0,1,1,0\n")
    result = runner.invoke(cli, ["eval-stress", "--config", str(config), "--input", str(matrices)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_check_plug_with_witness(runner, write_config, tmp_path):
    config = write_config({
        "params": {"mu1": 1.0, "mu2": 0.5, "nu": 1.0, "tau_star": 1.0},
        "dim": 2,
        "queries": [{"x_star": [[0.1, 0.0], [0.0, 0.1]]}, {"x_star": [[2.0, 0.0], [0.0, 0.0]]}],
    })
    out = tmp_path / "plug.json"
    result = runner.invoke(cli, ["check-plug", "--config", str(config), "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    inside, outside = json.loads(out.read_text())
    assert inside["member"] is True
    assert "witness" not in inside
    assert outside["member"] is False
    assert outside["witness_pairing"] > outside["witness_support"]


def test_check_plug_refuses_potential_regime_without_plug_matrix(runner, write_config):
    config = write_config({
        "params": {"mu1": 1.0, "mu2": 0.5, "tau_star": 1.0},
        "dim": 2,
        "queries": [{"x_star": [[0.1, 0.0], [0.0, 0.1]]}],
    })
    result = runner.invoke(cli, ["check-plug", "--config", str(config)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_run_channel_writes_outputs(runner, write_config, tmp_path):
    config = write_config(TINY_CHANNEL)
    out = tmp_path / "run"
    result = runner.invoke(cli, ["run-channel", "--config", str(config), "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "channel"
    assert sorted(manifest["outputs"]) == ["ledger.csv", "manifest.json", "profile.csv"]
    profile = pd.read_csv(out / "profile.csv", comment="#")
    assert list(profile.columns[:4]) == ["y", "u", "S12", "plug_flag"]
    assert len(profile) == 8


def test_run_galerkin_writes_series(runner, write_config, tmp_path):
    config = write_config({"modes": 4, "grid": 16, "t_end": 0.05, "params": {"mu1": 1.0, "tau_star": 0.1},
                           "reg_n": 100})
    out = tmp_path / "torus"
    result = runner.invoke(cli, ["run-galerkin", "--config", str(config), "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    series = pd.read_csv(out / "series.csv", comment="#")
    assert {"t", "energy", "identity_residual", "bound_lhs", "bound_rhs"} <= set(series.columns)


def test_sweep_over_nu_produces_three_manifests(runner, write_config, tmp_path):
    grid = write_config({"kind": "channel", "base": TINY_CHANNEL, "vary": {"params.nu": [0.5, 1.0, 2.0]}},
                        name="grid.json")
    out = tmp_path / "sweep"
    result = runner.invoke(cli, ["sweep", "--grid", str(grid), "--jobs", "2", "--out", str(out)])

    assert result.exit_code == EXIT_OK, result.output
    manifests = sorted(out.glob("run_*/manifest.json"))
    assert len(manifests) == 3
    nus = [json.loads(m.read_text())["config"]["params"]["nu"] for m in manifests]
    assert nus == [0.5, 1.0, 2.0]

    index = json.loads((out / "index.json").read_text())
    assert [entry["status"] for entry in index] == ["completed"] * 3
    assert [entry["overrides"]["params.nu"] for entry in index] == [0.5, 1.0, 2.0]


def test_sweep_with_invalid_member_exits_with_config_error(runner, write_config, tmp_path):
    grid = write_config({"kind": "channel", "base": TINY_CHANNEL, "vary": {"params.mu1": [1.0, -1.0]}},
                        name="grid.json")
    result = runner.invoke(cli, ["sweep", "--grid", str(grid), "--out", str(tmp_path / "sweep")])
    assert result.exit_code == EXIT_CONFIG_ERROR
