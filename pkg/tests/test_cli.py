import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from supercorr import cli
from supercorr.errors import PhysicsError, ValidationError

SMALL_FIG4C = {"scenario": "fig4c", "params": {"N": 20, "n_traj": 200, "n_out": 21, "N_values": [20]}}


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg) if name.endswith(".yaml") else json.dumps(cfg))
    return p


def test_list_order(capsys):
    assert cli.main(["list"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == list(cli.BUILTINS)
    assert names[0] == "fig1c" and "fig2b" in names and names[-1] == "sm-cavity"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "supercorr", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "sm-cavity" in res.stdout


@pytest.mark.parametrize("text, field", [
    ("scenario: fig2b\nbogus: 1\n", "bogus"),
    ("scenario: nope\n", "scenario"),
    ("scenario: fig2b\nparams: {n_max: 2.5}\n", "params.n_max"),
    ("scenario: fig2b\nparams: {U_values: [1, x]}\n", "params.U_values"),
    ("scenario: fig2b\nseed: -1\n", "seed"),
    ("scenario: fig2b\n  bad: [\n", "config"),
])
def test_malformed_config_exit_2_without_outputs(tmp_path, capsys, text, field):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 2
    assert field in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_unknown_parameter_names_field():
    with pytest.raises(ValidationError) as exc:
        cli.scenario_from_dict({"scenario": "fig2b", "params": {"nmax": 3}})
    assert exc.value.field == "params.nmax"


def test_off_resonant_emitters_exit_3(tmp_path):
    cfg = _write(tmp_path, {"scenario": "sm-t1t2", "params": {"omega_e": -3.0}})
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == PhysicsError.exit_code
    assert not out.exists() or not any(out.iterdir())


def test_runs_are_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL_FIG4C, "c.json")
    a = cli.run_scenario(cli.scenario_from_dict(cli.load_config(cfg)), tmp_path / "a")
    b = cli.run_scenario(cli.scenario_from_dict(cli.load_config(cfg)), tmp_path / "b")
    tables = {k: v for k, v in a.files.items() if k != "summary.json"}
    assert tables and all(b.files[k] == v for k, v in tables.items())
    c = cli.run_scenario(cli.scenario_from_dict(cli.load_config(cfg), seed=99), tmp_path / "c")
    assert c.scenario_hash != a.scenario_hash
    assert any(c.files[k] != v for k, v in tables.items())


def test_workers_do_not_change_results(tmp_path):
    s = cli.scenario_from_dict({"scenario": "fig2b", "params": {"n_max": 4}})
    a = cli.run_scenario(s, tmp_path / "a", workers=1)
    b = cli.run_scenario(s, tmp_path / "b", workers=2)
    assert a.files["fig2b_f_K0.csv"] == b.files["fig2b_f_K0.csv"]


def test_outputs_round_trip(tmp_path):
    s = cli.scenario_from_dict({"scenario": "fig2b", "params": {"n_max": 4}, "J_in_MHz": 10.0})
    tables, _ = cli.BUILTINS["fig2b"].runner(s.params, s.seed, 1)
    m = cli.run_scenario(s, tmp_path)
    out = tmp_path / "fig2b"
    assert set(os.listdir(out)) == set(m.files) | {"manifest.json"}
    header = (out / "fig2b_f_K0.csv").read_text().splitlines()[0]
    assert header == "U [J],n1 [site],n2 [site],f_K0 [1]"
    data = np.loadtxt(out / "fig2b_f_K0.csv", delimiter=",", skiprows=1)
    assert np.allclose(data, tables[0].data, rtol=1e-11, atol=0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["scenario_hash"] == s.hash and summary["J_in_MHz"] == 10.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenario_hash"] == s.hash and set(manifest["files"]) == set(m.files)


def test_json_format(tmp_path):
    assert cli.main(["run", "--builtin", "fig2b", "--out", str(tmp_path), "--format", "json"]) == 0
    doc = json.loads((tmp_path / "fig2b" / "fig2b_f_K0.json").read_text())
    assert doc["name"] == "fig2b_f_K0" and "f_K0 [1]" in doc["columns"]


def test_rerun_replaces_directory(tmp_path):
    s = cli.scenario_from_dict({"scenario": "fig2b", "params": {"n_max": 2}})
    cli.run_scenario(s, tmp_path)
    (tmp_path / "fig2b" / "stale.txt").write_text("x")
    cli.run_scenario(s, tmp_path)
    assert not (tmp_path / "fig2b" / "stale.txt").exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_hash_depends_on_params_and_seed():
    a = cli.scenario_from_dict({"scenario": "fig2b"})
    b = cli.scenario_from_dict({"scenario": "fig2b", "params": {"n_max": 9}})
    c = cli.scenario_from_dict({"scenario": "fig2b"}, seed=1)
    d = cli.scenario_from_dict({"scenario": "fig2b", "name": "other"})
    assert len({a.hash, b.hash, c.hash}) == 3 and d.hash == a.hash


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 1
    assert "cannot read" in capsys.readouterr().err
