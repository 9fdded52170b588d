import json

import pytest

from spde_reduce.cli import (EXIT_CONFIG, OUTPUT_ENV, RunConfig, ConfigError, list_models, main, model_table,
                             read_config_file)


def _run(tmp_path, *args):
    return main(["run", "--output-dir", str(tmp_path), *args])


def test_list_models_text(capsys):
    assert main(["list-models"]) == 0
    out = capsys.readouterr().out
    assert "damped_wave: γ=10, ε=0.5 (Fig. 1)" in out
    assert "allen_cahn: L=20, ε=0.1 (Fig. 2)" in out


def test_list_models_json_round_trips_through_schema():
    table = json.loads(list_models(as_json=True))
    for name, row in table.items():
        cfg = RunConfig.from_dict(row)
        assert cfg.model == name
        assert cfg.overrides == row["overrides"]
    assert table == model_table()


def test_reduced_swift_hohenberg(tmp_path):
    assert _run(tmp_path, "--model", "swift_hohenberg", "--n-paths", "200") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["h_star"] == pytest.approx(0.18371, abs=5e-6)
    assert summary["results"]["time_averaged_mean"] == pytest.approx(summary["h_star"], rel=0.05)
    assert summary["seed"] == 0 and len(summary["config_hash"]) == 16
    for name in ("series.csv", "histogram.csv"):
        assert (tmp_path / name).read_text().startswith(f"# config_hash={summary['config_hash']} seed=0")


def test_noise_free_damped_wave(tmp_path):
    assert _run(tmp_path, "--model", "damped_wave", "--eps", "0", "--n-paths", "50") == 0
    res = json.loads((tmp_path / "summary.json").read_text())["results"]
    assert abs(res["final_mean"]) < 1e-3
    assert res["final_var"] < 1e-30


def test_covariance_mode(tmp_path):
    assert _run(tmp_path, "--mode", "covariance-test", "--noise-modes", "8", "--n-samples", "20000") == 0
    res = json.loads((tmp_path / "summary.json").read_text())["results"]
    assert res["noise_modes"] == 8 and res["max_z"] <= 5


def test_byte_identical_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(d, "--model", "nls_soliton", "--n-paths", "100", "--T", "10", "--seed", "7",
                    "--store-paths", "10") == 0
    for name in ("series.csv", "histogram.csv", "paths.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# example\nmodel = damped_wave\nn_paths = 10\nT = 1\neps = 0.2\nseed = 3\n")
    data = read_config_file(cfg)
    assert data["eps"] == "0.2"
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "4", "--output-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 4
    assert summary["params"]["eps"] == 0.2


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--model", "damped_wave", "--n-paths", "5", "--T", "0.1"]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_config_errors(tmp_path):
    assert _run(tmp_path, "--model", "damped_wave", "--set", "bogus=1") == EXIT_CONFIG
    assert _run(tmp_path, "--model", "damped_wave", "--dt", "-1") == EXIT_CONFIG
    assert _run(tmp_path, "--model", "damped_wave", "--T", "0.001", "--dt", "0.01") == EXIT_CONFIG
    assert _run(tmp_path, "--model", "damped_wave", "--set", "gamma=-1") == EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--model", "damped_wave", "--output-dir", str(blocker / "sub")]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": "nope"})


def test_divergence_exit_code(tmp_path):
    # an unstable cubic blows up every path
    assert _run(tmp_path, "--model", "swift_hohenberg", "--h0", "50", "--dt", "0.5", "--T", "5",
                "--n-paths", "5") == 3


@pytest.mark.parametrize("mode", ["full-spde", "coupled", "equivalence"])
def test_field_modes(tmp_path, mode):
    assert _run(tmp_path, "--model", "damped_wave", "--mode", mode, "--n-paths", "3", "--T", "0.2",
                "--eps", "0.1") == 0
    assert (tmp_path / "series.csv").exists()


def test_verify(capsys):
    assert main(["verify"]) == 0
    assert "PASS" in capsys.readouterr().out
