import json
import os

import pytest

from symplyap import config
from symplyap.cli import EXIT_CONFIG, EXIT_OK, EXIT_TASK, main
from symplyap.errors import ConfigError
from symplyap.experiments import fmt, sha256

BASE = """\
# two-channel Bernoulli model
n_channels = 2
cell_length = 0.5
couplings = 1, 1
log_chart_radius = 1.0
seed = 7
"""


@pytest.fixture
def cfg_file(tmp_path):
    def make(text=BASE):
        p = tmp_path / "model.cfg"
        p.write_text(text)
        return str(p)
    return make


def read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


# ---------------------------------------------------------------- config grammar

def test_parse_model_and_params():
    parsed = config.parse_text(BASE + "\n[params]\nn_steps = 2000  # short\n")
    assert parsed.model["couplings"] == [1.0, 1.0]
    assert parsed.seed == 7
    assert parsed.params == {"n_steps": "2000"}
    cfg = parsed.model_config()
    assert cfg.n_channels == 2 and cfg.disorder_weights == (0.5, 0.5)


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as err:
        config.parse_text("n_channels = 1\ncell_length = 1\nwidth = 3\n")
    assert err.value.key == "width"
    assert "width" in str(err.value)


def test_bad_value_and_missing_key():
    with pytest.raises(ConfigError) as err:
        config.parse_text("n_channels = two\n")
    assert err.value.key == "n_channels"
    with pytest.raises(ConfigError) as err:
        config.parse_text("n_channels = 1\n").model_config()
    assert err.value.key == "cell_length"


def test_invalid_model_is_config_error():
    with pytest.raises(ConfigError) as err:
        config.parse_text("n_channels = 1\ncell_length = 1\ndisorder_weights = 0.9, 0.3\n"
                          ).model_config()
    assert err.value.key == "disorder_weights"


def test_dump_round_trip():
    parsed = config.parse_text(BASE)
    again = config.parse_text(config.dump(parsed.model, {"n_steps": "10"}))
    assert again.model == parsed.model and again.params == {"n_steps": "10"}


def test_csv_number_format():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(2) == "2" and fmt(None) == "" and fmt(True) == "true"
    assert fmt(float("nan")) == "nan"


# ---------------------------------------------------------------- commands

def test_window_command(cfg_file, tmp_path, capsys):
    out = tmp_path / "w"
    assert main(["window", "--config", cfg_file(), "--out", str(out)]) == EXIT_OK
    assert "window [0, 1], ell_C = 0.666666666667" in capsys.readouterr().out
    header, rows = read_csv(out / "window.csv")
    rec = dict(zip(header, rows[0]))
    assert rec["lower"] == "0" and rec["upper"] == "1" and rec["ell_c"] == "0.666666666667"
    assert {"seed", "L", "h", "N", "ell"} <= set(header)


def test_window_command_empty(cfg_file, tmp_path, capsys):
    text = BASE.replace("cell_length = 0.5", "cell_length = 0.9")
    assert main(["window", "--config", cfg_file(text), "--out", str(tmp_path / "e")]) == EXIT_OK
    assert "window empty (ℓ ≥ ℓ_C)" in capsys.readouterr().out


def test_lie_check_command(cfg_file, tmp_path, capsys):
    assert main(["lie-check", "--config", cfg_file(), "--out", str(tmp_path / "l")]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == ["1, 3, 3, PASS", "2, 10, 10, PASS", "3, 21, 21, PASS", "4, 36, 36, PASS"]


def test_config_error_exit_code(cfg_file, tmp_path, capsys):
    rc = main(["window", "--config", cfg_file(BASE + "colour = red\n"), "--out", str(tmp_path)])
    assert rc == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    rc = main(["lyapunov-sweep", "--config", cfg_file(), "--param", "steps=10",
               "--out", str(tmp_path)])
    assert rc == EXIT_CONFIG
    assert "steps" in capsys.readouterr().err
    rc = main(["window", "--config", cfg_file(), "--trials", "5", "--out", str(tmp_path)])
    assert rc == EXIT_CONFIG


def test_task_failure_exit_code(cfg_file, tmp_path):
    out = tmp_path / "d"
    rc = main(["decay", "--config", cfg_file(), "--out", str(out), "--param", "energy=-50",
               "--param", "window_radius=0.1", "--param", "lyapunov_steps=1000",
               "--param", "half_cells=4"])
    assert rc == EXIT_TASK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tasks"][0]["status"] == "failed"
    assert "EigenvalueNotFound" in manifest["tasks"][0]["error"]


def _sweep(cfg_file, out, threads):
    return main(["lyapunov-sweep", "--config", cfg_file(), "--out", str(out), "--threads",
                 str(threads), "--param", "n_steps=3000", "--param", "n_energies=3"])


def test_sweep_outputs_manifest_and_plot_files(cfg_file, tmp_path):
    out = tmp_path / "s"
    assert _sweep(cfg_file, out, 1) == EXIT_OK
    header, rows = read_csv(out / "lyapunov.csv")
    assert header[:6] == ["E", "i", "gamma", "stderr", "n", "seed"]
    assert len(rows) == 12
    for i in range(1, 5):
        assert (out / f"gamma_{i}.dat").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    emitted = sorted(f for f in os.listdir(out) if f != "manifest.json")
    assert sorted(manifest["files"]) == emitted
    for name, digest in manifest["files"].items():
        assert sha256(out / name) == digest
    assert manifest["tool_version"] and manifest["wall_clock_s"] >= 0
    assert len({t["seed"] for t in manifest["tasks"]}) == 3


def test_results_independent_of_worker_count(cfg_file, tmp_path):
    assert _sweep(cfg_file, tmp_path / "a", 1) == EXIT_OK
    assert _sweep(cfg_file, tmp_path / "b", 3) == EXIT_OK
    assert (tmp_path / "a" / "lyapunov.csv").read_bytes() == \
        (tmp_path / "b" / "lyapunov.csv").read_bytes()


def test_replay_reproduces_csv(cfg_file, tmp_path):
    assert _sweep(cfg_file, tmp_path / "a", 1) == EXIT_OK
    assert main(["replay", "--manifest", str(tmp_path / "a" / "manifest.json"),
                 "--out", str(tmp_path / "r")]) == EXIT_OK
    assert read_csv(tmp_path / "a" / "lyapunov.csv") == read_csv(tmp_path / "r" / "lyapunov.csv")


def test_seed_flag_changes_results(cfg_file, tmp_path):
    args = ["lyapunov-sweep", "--config", cfg_file(), "--param", "n_steps=2000",
            "--param", "n_energies=1"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--seed", "8"])
    assert read_csv(tmp_path / "a" / "lyapunov.csv") != read_csv(tmp_path / "b" / "lyapunov.csv")


def test_ids_command_writes_monotone_curve(cfg_file, tmp_path):
    out = tmp_path / "i"
    assert main(["ids", "--config", cfg_file(), "--out", str(out), "--trials", "2",
                 "--param", "half_cells=4", "--param", "n_energies=20"]) == EXIT_OK
    rows = [ln.split() for ln in (out / "ids.dat").read_text().splitlines()
            if not ln.startswith("#")]
    vals = [float(r[1]) for r in rows]
    assert vals == sorted(vals)


def test_decay_command_header(cfg_file, tmp_path):
    out = tmp_path / "d"
    assert main(["decay", "--config", cfg_file(), "--out", str(out), "--param", "half_cells=16",
                 "--param", "lyapunov_steps=2000"]) == EXIT_OK
    head = (out / "decay_0.dat").read_text().splitlines()[:3]
    assert head[0].startswith("# m_hat = ")
    assert head[1].startswith("# gamma_1 = ") and head[2].startswith("# gamma_N = ")


@pytest.mark.parametrize("command", ["wegner", "good-box", "probes"])
def test_probe_commands_write_json(cfg_file, tmp_path, command):
    out = tmp_path / command
    extra = [] if command == "wegner" else ["--param", "lyapunov_steps=2000"]
    if command != "probes":
        extra += ["--param", "half_cells=3" if command == "good-box" else "half_cells=2"]
    assert main([command, "--config", cfg_file(), "--out", str(out), "--trials", "3"]
                + extra) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    json_files = [f for f in manifest["files"] if f.endswith(".json")]
    assert json_files
    record = json.loads((out / json_files[0]).read_text())
    assert all({"estimate", "ci_low", "ci_high", "seed"} <= set(r) for r in record["reports"])
