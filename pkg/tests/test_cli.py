import numpy as np
import pytest

from cgae import cli
from cgae.config import ConfigError, RunConfig, load_config
from cgae.model import CgaeModel, load_checkpoint, save_checkpoint

SMALL = """\
[synth]
nodes = 3
days = 24

[lags]
max_lag = 60
tau = 0.3

[model]
hidden_width = 8

[training]
epochs = 1

[forecast]
rho = 64
horizons = 1, 2
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out.strip(), err


def summary(line):
    return dict(tok.split("=", 1) for tok in line.split())


# --- config ---------------------------------------------------------------

def test_defaults():
    cfg = load_config()
    assert cfg.threshold == 0.95 and cfg.tau == 0.45 and cfg.rho == 10_000 and cfg.horizons == (1,)
    assert cfg.coverages[0] == 0.1 and cfg.coverages[-1] == 0.9 and cfg.add_output_noise


def test_file_values_and_overrides(small_config):
    cfg = load_config(small_config, seed=9)
    assert cfg.nodes == 3 and cfg.horizons == (1, 2) and cfg.seed == 9 and cfg.hidden_width == 8


def test_unknown_keys_and_bad_values_reported_together(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[graph]\nthreshhold = 0.5\nmode = grid\n[forecast]\nrho = many\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    problems = "\n".join(info.value.problems)
    assert "graph.threshhold: unknown key" in problems
    assert "forecast.rho" in problems
    assert "[extra]: unknown section" in problems


def test_value_validation():
    with pytest.raises(ConfigError, match="graph.mode"):
        RunConfig(mode="grid")
    with pytest.raises(ConfigError, match="forecast.rho"):
        RunConfig(rho=1)


# --- command line ---------------------------------------------------------

def test_unknown_subcommand_prints_usage(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["bake"])
    assert info.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_invalid_config_exits_with_field_messages(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("[model]\neta = -1\n")
    code, _, err = run(capsys, "synth", "--config", str(path))
    assert code != 0 and "model.eta" in err


def test_missing_upstream_artifact_is_named(tmp_path, capsys):
    code, _, err = run(capsys, "forecast", "--workdir", str(tmp_path / "empty"))
    assert code != 0 and "data.csv" in err


def test_zero_epochs_checkpoint_equals_initialization(tmp_path, small_config, capsys):
    wd = str(tmp_path / "w")
    assert run(capsys, "synth", "--config", str(small_config), "--workdir", wd)[0] == 0
    code, out, _ = run(capsys, "train", "--config", str(small_config), "--workdir", wd, "--epochs", "0",
                       "--horizon", "1")
    assert code == 0 and summary(out)["epochs"] == "0"
    trained = load_checkpoint(tmp_path / "w" / "model_k1.json")
    fresh = CgaeModel(trained.config, trained.propagation, trained.scale)
    save_checkpoint(fresh, tmp_path / "fresh.json")
    assert (tmp_path / "fresh.json").read_bytes() == (tmp_path / "w" / "model_k1.json").read_bytes()


def _pipeline(capsys, cfg, wd):
    lines = []
    for stage in ("synth", "select-lags", "build-graph", "train", "forecast", "evaluate"):
        code, out, err = run(capsys, stage, "--config", str(cfg), "--workdir", str(wd))
        assert code == 0, err
        assert "\n" not in out and summary(out)["stage"] == stage
        lines.append(out)
    return lines


def test_end_to_end_is_reproducible(tmp_path, small_config, capsys):
    _pipeline(capsys, small_config, tmp_path / "a")
    _pipeline(capsys, small_config, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    for k in (1, 2):
        for name in ("report_crps", "report_reliability", "report_piaw", "report_entropy"):
            assert (tmp_path / "a" / f"report_k{k}" / f"{name}_{k}.csv") in [tmp_path / "a" / f for f in files]
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    ens = np.load(tmp_path / "a" / "forecast_k1" / "ensembles.npy")
    assert ens.shape[1:] == (64, 3) and np.all(ens >= 0)


def test_seed_override_changes_outputs(tmp_path, small_config, capsys):
    for seed, wd in (("1", "s1"), ("2", "s2")):
        assert run(capsys, "synth", "--config", str(small_config), "--workdir", str(tmp_path / wd),
                   "--seed", seed)[0] == 0
    assert (tmp_path / "s1" / "data.csv").read_bytes() != (tmp_path / "s2" / "data.csv").read_bytes()
