import json
import subprocess
import sys

import pytest
import yaml

from phonon_sim.cli import dump_config, load_config, main
from phonon_sim.experiments import ExperimentConfig, ExperimentName


def write_template(tmp_path, name="RABI_FOCK"):
    path = tmp_path / f"{name.lower()}.yaml"
    assert main(["template", name, "--out", str(path)]) == 0
    return path


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == len(ExperimentName)
    assert all("Fig" in line for line in out)
    assert out[0].startswith("PHASE_SCAN_FOCK")


def test_template_roundtrip(tmp_path):
    for name in ExperimentName:
        cfg = load_config(write_template(tmp_path, name.value))
        assert cfg == ExperimentConfig.default(name)
        assert load_config(write_template(tmp_path, name.value)).to_dict() == yaml.safe_load(dump_config(cfg))


def test_template_stdout(capsys):
    assert main(["template", "RABI_UPSILON"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["name"] == "RABI_UPSILON"


def test_run_writes_only_into_out(tmp_path, monkeypatch):
    cfg = write_template(tmp_path)
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "results"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 2 and files[0].endswith(".csv") and files[1].endswith(".meta.json")
    lines = (out / files[0]).read_text().splitlines()
    assert len(lines) == 102
    assert list(work.iterdir()) == []


def test_run_cutoff_override_and_seed(tmp_path):
    cfg = write_template(tmp_path)
    out = tmp_path / "r"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--format", "json",
                 "--cutoff-override", "6", "5", "--seed", "9"]) == 0
    (path,) = out.iterdir()
    meta = json.loads(path.read_text())["metadata"]
    assert meta["cutoffs"] == [6, 5]
    assert meta["config"]["space"] == {"n1": 6, "n2": 5, "levels": 2}
    assert meta["config"]["seed"] == 9


def test_run_is_reproducible(tmp_path):
    cfg = write_template(tmp_path, "PHASE_SCAN_FOCK")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = sorted((tmp_path / "a").glob("*.csv"))[0]
    b = sorted((tmp_path / "b").glob("*.csv"))[0]
    assert a.name == b.name and a.read_bytes() == b.read_bytes()


def test_invalid_key_reports_name(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("name: RABI_FOCK\nparams:\n  g1: 5.0\n  gamma_x: 1\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "gamma_x" in err and err.startswith("error:")
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_non_mapping_config(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("argv", [["run", "--config", "x.yaml", "--out", "o", "--cutoff-override", "0", "3"],
                                  ["run", "--config", "x.yaml", "--out", "o", "--seed", "-1"],
                                  ["template", "NOT_AN_EXPERIMENT"], []])
def test_argument_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_verify_filter(capsys):
    assert main(["verify", "--filter", "ladder"]) == 0
    out = capsys.readouterr().out
    assert "ladder relation" in out and "PASS" in out
    assert main(["verify", "--filter", "nothing-matches"]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "phonon_sim.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "TOMO_ROUNDTRIP" in proc.stdout
