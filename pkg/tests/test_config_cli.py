import json
import os
import subprocess
import sys

import numpy as np
import pytest

from slotqed.cli import main
from slotqed.config import ConfigError, RunConfig, load_preset, parse_config, preset_names
from slotqed.modesolver import read_field_dump

SOLVE = """
[geometry]
material = "GaP"
w_nm = 200.0
h_nm = 200.0
t_slot_nm = 20.0

[solve]
wavelength_nm = 720.0
n_modes = 1
symmetry = "even"
boundary_tol = 1e-3
"""


def _run(tmp_path, text, command, *extra):
    cfg = tmp_path / "run.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_missing_required_key_names_it(tmp_path, capsys):
    code, _ = _run(tmp_path, SOLVE.replace("w_nm = 200.0\n", ""), "solve")
    assert code == 2
    err = capsys.readouterr().err
    assert "w_nm" in err and "[geometry]" in err


@pytest.mark.parametrize("text,needle", [
    (SOLVE + "\n[extras]\nfoo = 1\n", "extras"),
    (SOLVE.replace("n_modes = 1", "n_modes = 1\nnmodes = 2"), "nmodes"),
    (SOLVE.replace("n_modes = 1", 'n_modes = "one"'), "n_modes"),
    (SOLVE.replace('symmetry = "even"', 'symmetry = "sideways"'), "symmetry"),
])
def test_bad_configs_rejected(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_config_round_trip_and_hash():
    cfg = parse_config(SOLVE)
    again = RunConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.grid.dx_nm == 10.0 and cfg.output.formats == ("json", "csv")
    assert parse_config(SOLVE.replace("720.0", "730.0")).hash() != cfg.hash()


def test_missing_section_for_command(tmp_path, capsys):
    code, _ = _run(tmp_path, SOLVE, "cqed")
    assert code == 2
    assert "cqed" in capsys.readouterr().err


def test_every_preset_parses():
    names = preset_names()
    assert {"gap_band1_reference", "cqed_estimate", "material_table"} <= set(names)
    for n in names:
        load_preset(n)


def test_cqed_preset(tmp_path):
    out = tmp_path / "q"
    assert main(["cqed", "--preset", "cqed_estimate", "--out", str(out)]) == 0
    data = json.loads((out / "cqed.json").read_text())
    assert data["figures"]["C"] == pytest.approx(41.0, abs=1.0)
    assert data["figures"]["kappa0"] == pytest.approx(2.5115e11, rel=1e-4)
    assert data["figures"]["g1"] is None
    assert data["command"] == "cqed" and data["config_hash"] == load_preset("cqed_estimate").hash()
    assert os.listdir(out) == ["cqed.json"]


def test_solve_with_field_dump_and_determinism(tmp_path):
    code, out = _run(tmp_path, SOLVE, "solve", "--dump-fields")
    assert code == 0
    assert sorted(os.listdir(out)) == ["mode_0.fields", "solve_summary.json"]
    first = (out / "solve_summary.json").read_bytes()
    data = json.loads(first)
    mode = data["modes"][0]
    assert mode["pol_fraction_y"] > 0.8 and 1.45 < mode["n_eff"] < 3.2
    header, fields = read_field_dump(out / "mode_0.fields")
    assert header["n_eff"] == mode["n_eff"]
    assert np.isfinite(fields["Ey"]).all()

    assert main(["solve", "--config", str(tmp_path / "run.toml"), "--out", str(out), "--dump-fields"]) == 0
    assert (out / "solve_summary.json").read_bytes() == first


def test_solver_failure_exits_3(tmp_path, capsys):
    text = SOLVE.replace('"GaP"', '"SiNx"').replace("w_nm = 200.0", "w_nm = 50.0").replace("h_nm = 200.0", "h_nm = 60.0")
    code, _ = _run(tmp_path, text, "solve")
    assert code == 3
    assert "solver failure" in capsys.readouterr().err


def test_material_out_of_range_is_config_error(tmp_path):
    code, _ = _run(tmp_path, SOLVE.replace("wavelength_nm = 720.0", "wavelength_nm = 5000.0"), "solve")
    assert code == 2


def test_coupling_outputs_stay_in_out_dir(tmp_path):
    text = SOLVE + """
[coupling]
wavelengths_nm = [720.0]
orientations = ["y", "z"]
displacement_u = [0.0, 0.5, -0.5]
"""
    before = set(os.listdir(tmp_path))
    code, out = _run(tmp_path, text, "coupling")
    assert code == 0
    assert set(os.listdir(tmp_path)) - before == {"out", "run.toml"}
    assert sorted(os.listdir(out)) == ["coupling_summary.json", "displacement_y_720nm.csv",
                                       "displacement_z_720nm.csv"]
    data = json.loads((out / "coupling_summary.json").read_text())
    res = data["results"][0]
    assert set(res["orientations"]) == {"y", "z"}
    assert [r["u"] for r in res["displacement"]["y"]] == [-0.5, 0.0, 0.5]
    assert res["orientations"]["y"]["beta"] > 0.5


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "slotqed", "cqed", "--preset", "cqed_estimate",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "slotqed", "solve"], capture_output=True, text=True)
    assert r.returncode == 2 and "--config" in r.stderr
