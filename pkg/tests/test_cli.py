import json

import pytest

from nested_ising import cli


def small_config(**changes):
    doc = {
        "schema_version": 1,
        "experiment": "purity_decay",
        "layout": {"n_c": 1, "n_e": 2, "n_ep": 3},
        "topology": {"preset": "baseline-chain"},
        "parameters": {"J": 1.0, "lambda": 0.1, "gamma": 0.3},
        "run": {"t_max": 20, "record_times": {"step": 10}, "base_seed": 3, "n_realizations": 2},
    }
    doc.update(changes)
    return doc


@pytest.fixture
def write_config(tmp_path):
    def write(doc, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return write


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_csv_and_sidecar(tmp_path, write_config, capsys):
    code, out, _ = run(["run", write_config(small_config()), "--outdir", str(tmp_path / "o")], capsys)
    assert code == 0
    text = (tmp_path / "o" / "purity_decay.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "gamma,t,realization,purity"
    assert len(lines) == 1 + 3 * 3
    assert sum(line.split(",")[2] == "mean" for line in lines[1:]) == 3
    meta = json.loads((tmp_path / "o" / "purity_decay.meta.json").read_text())
    assert meta["run_config"]["experiment"] == "purity_decay"
    assert meta["overrides"] == {}


def test_sidecar_reproduces_csv(tmp_path, write_config, capsys):
    run(["run", write_config(small_config()), "--outdir", str(tmp_path / "a")], capsys)
    sidecar = str(tmp_path / "a" / "purity_decay.meta.json")
    assert run(["run", sidecar, "--outdir", str(tmp_path / "b"), "--threads", "2"], capsys)[0] == 0
    a = (tmp_path / "a" / "purity_decay.csv").read_bytes()
    b = (tmp_path / "b" / "purity_decay.csv").read_bytes()
    assert a == b


def test_override_bare_and_dotted(tmp_path, write_config, capsys):
    path = write_config(small_config())
    code, _, _ = run(["run", path, "--override", "gamma=0.5", "--override", "run.t_max=30",
                      "--outdir", str(tmp_path)], capsys)
    assert code == 0
    meta = json.loads((tmp_path / "purity_decay.meta.json").read_text())
    assert meta["overrides"] == {"parameters.gamma": 0.5, "run.t_max": 30}
    assert meta["spec"]["config"]["gamma"] == 0.5
    assert meta["spec"]["record_times"] == [0, 10, 20, 30]


def test_ambiguous_or_unknown_override(write_config, capsys):
    path = write_config(small_config())
    code, _, err = run(["run", path, "--override", "nonsense=1"], capsys)
    assert code == 1
    assert "nonsense" in err
    code, _, err = run(["run", path, "--override", "parameters.nonsense=1"], capsys)
    assert code == 1
    assert "Additional properties" in err


def test_memory_limit_exit_one(write_config, capsys):
    doc = small_config(layout={"n_c": 1, "n_e": 19, "n_ep": 20})
    code, _, err = run(["run", write_config(doc)], capsys)
    assert code == 1
    assert "memory limit" in err


@pytest.mark.parametrize("change", [
    {"schema_version": 2},
    {"experiment": "nope"},
    {"extra": 1},
    {"topology": {"preset": "missing"}},
])
def test_schema_violations_exit_one(write_config, capsys, change):
    code, _, err = run(["run", write_config(small_config(**change))], capsys)
    assert code == 1
    assert err.startswith("error:")


def test_missing_file_exit_one(tmp_path, capsys):
    code, _, err = run(["run", str(tmp_path / "absent.json")], capsys)
    assert code == 1
    assert "does not exist" in err


def test_preset_layout_mismatch(write_config, capsys):
    doc = small_config(topology={"preset": "spectator"})
    code, _, err = run(["run", write_config(doc)], capsys)
    assert code == 1
    assert "n_c" in err


def test_numerical_failure_exit_two(write_config, monkeypatch, capsys):
    from nested_ising.errors import NumericalFailure

    def boom(*args, **kwargs):
        raise NumericalFailure("rho rho~ has complex eigenvalues")

    monkeypatch.setattr(cli, "purity_decay", boom)
    code, _, err = run(["run", write_config(small_config())], capsys)
    assert code == 2
    assert "complex eigenvalues" in err


def test_degenerate_fit_exit_two(tmp_path, write_config, capsys):
    doc = small_config(experiment="lambda_sweep",
                       parameters={"lambdas": [0.01, 0.02], "gammas": [0.3], "t_fix": 20})
    code, _, _ = run(["run", write_config(doc), "--outdir", str(tmp_path)], capsys)
    assert code == 2


def test_env_var_sets_default_outdir(tmp_path, write_config, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path / "env"))
    assert run(["run", write_config(small_config())], capsys)[0] == 0
    assert (tmp_path / "env" / "purity_decay.csv").exists()


def test_config_output_dir_beats_env(tmp_path, write_config, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path / "env"))
    doc = small_config(output_dir=str(tmp_path / "cfg"))
    assert run(["run", write_config(doc)], capsys)[0] == 0
    assert (tmp_path / "cfg" / "purity_decay.csv").exists()


@pytest.mark.parametrize("experiment, params, extra", [
    ("gamma_sweep", {"gammas": [0.1, 0.4]}, {}),
    ("nu_scaling", {"gamma_prime": 0.4, "nus": [1, 2], "topology_seed": 1}, {}),
    ("nu_scaling", {"gamma": 0.4, "rescale_by_nu": True, "nus": [1, 2]}, {}),
    ("lambda_sweep", {"lambdas": [0.01, 0.02, 0.04], "gammas": [0.3], "t_fix": 20}, {}),
    ("far_coupling_control", {"epsilon_factor": 1.0}, {}),
    ("env_size_sweep", {"sizes": [[1, 1], [2, 2]], "gammas": [0.2]}, {}),
    ("concurrence_decay", {"central_beta": 1.0, "gammas": [0.05, 0.5]},
     {"layout": {"n_c": 2, "n_e": 2, "n_ep": 3}, "topology": {"preset": "spectator"}}),
    ("cp_trajectory", {"central_beta": 1.0, "gammas": [0.5]},
     {"layout": {"n_c": 2, "n_e": 2, "n_ep": 3}, "topology": {"preset": "spectator"}}),
])
def test_every_experiment_runs(tmp_path, write_config, capsys, experiment, params, extra):
    doc = small_config(experiment=experiment, parameters=params, **extra)
    code, out, err = run(["run", write_config(doc), "--outdir", str(tmp_path)], capsys)
    assert code == 0, err
    assert (tmp_path / f"{experiment}.csv").exists()
    assert (tmp_path / f"{experiment}.meta.json").exists()


def test_cp_trajectory_writes_reference_curves(tmp_path, write_config, capsys):
    doc = small_config(experiment="cp_trajectory", parameters={"central_beta": 1.0},
                       layout={"n_c": 2, "n_e": 2, "n_ep": 3}, topology={"preset": "spectator"})
    run(["run", write_config(doc), "--outdir", str(tmp_path)], capsys)
    lines = (tmp_path / "cp_trajectory.curves.csv").read_text().splitlines()
    assert lines[0] == "curve,parameter,purity,concurrence"
    assert lines[1].startswith("werner,0,0.25")


def test_list_presets_output(capsys):
    code, out, _ = run(["list-presets"], capsys)
    assert code == 0
    assert "baseline-chain (Fig. 2)" in out
    assert "spectator (Fig. 10)" in out
    assert run(["list-presets"], capsys)[1] == out


def test_verify_quick_passes(capsys):
    code, out, _ = run(["verify", "quick"], capsys)
    assert code == 0
    assert "2/2 checks passed" in out


def test_verify_detects_flipped_gate_order(capsys):
    code, out, _ = run(["verify", "quick", "--flip-gate-order"], capsys)
    assert code != 0
    assert "FAIL  oracle-equivalence" in out


def test_bad_thread_count(write_config, capsys):
    assert run(["run", write_config(small_config()), "--threads", "0"], capsys)[0] == 1


def test_shipped_configs_validate():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.glob("*.json"))
    assert paths
    for path in paths:
        doc, _ = cli.load_config(path)
        cli.build_run(doc)
