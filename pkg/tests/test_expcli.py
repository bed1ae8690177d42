import csv
import json
import math
import subprocess
import sys

import pytest
import yaml

from gibbscmi.errors import ConfigError
from gibbscmi.experiments import DEFAULTS, EXPERIMENTS, config_hash, emit, load, resolve, run
from gibbscmi.experiments.cli import main


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _run_cli(tmp_path, experiment, cfg, out="out", *extra):
    code = main([experiment, "--config", _write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_bundled_config_resolves(experiment):
    cfg = load(experiment)
    assert cfg["experiment"] == experiment
    assert set(cfg["params"]) == set(DEFAULTS[experiment]["params"])


def test_resolve_fills_defaults_and_seed():
    cfg = resolve({"params": {"radii": [2, 3]}}, "cmi-scan", DEFAULTS["cmi-scan"], seed=9)
    assert cfg["params"]["radii"] == [2, 3]
    assert cfg["params"]["fit_min"] == DEFAULTS["cmi-scan"]["params"]["fit_min"]
    assert cfg["seed"] == 9


@pytest.mark.parametrize(
    "raw, where",
    [
        ({"params": {"no_such_knob": 1}}, "params"),
        ({"params": {"radii": "two"}}, "params/radii"),
        ({"betas": [-1.0]}, "betas/0"),
        ({"lattice": {"type": "chain"}}, "lattice"),
        ({"experiment": "bp-verify"}, "experiment"),
    ],
)
def test_schema_violations(raw, where):
    with pytest.raises(ConfigError) as exc:
        resolve(raw, "cmi-scan", DEFAULTS["cmi-scan"])
    assert exc.value.code == "schema-violation"
    assert str(exc.value.details["path"]).startswith(where)


def test_schema_violation_exits_2(tmp_path, capsys):
    code, _ = _run_cli(tmp_path, "cmi-scan", {"params": {"radii": "two"}})
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["code"] == "schema-violation"


def test_bad_yaml_exits_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("params: [unclosed\n")
    assert main(["cmi-scan", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert main(["cmi-scan", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_bad_region_exits_2(tmp_path):
    cfg = {"lattice": {"type": "chain", "n": 6}, "params": {"L": [0, 9]}}
    assert _run_cli(tmp_path, "bp-truncate", cfg)[0] == 2


def test_dense_cap_exits_3(tmp_path, capsys):
    cfg = {"lattice": {"type": "chain", "n": 6}, "betas": [1.0], "params": {"radii": [2, 3]}, "dense_cap": 16}
    code, out = _run_cli(tmp_path, "cmi-scan", cfg)
    assert code == 3
    assert not out.exists()
    assert json.loads(capsys.readouterr().err)["exit_code"] == 3


def test_learning_window_too_small_exits_3(tmp_path, capsys):
    cfg = {"lattice": {"type": "chain", "n": 6}, "params": {"window": 3, "core": 2, "sweep": False}}
    assert _run_cli(tmp_path, "learn-1d", cfg)[0] == 3
    assert json.loads(capsys.readouterr().err)["code"] == "window-too-small"


def test_empty_table_is_header_only(tmp_path):
    cfg = {"params": {"n_pairs": 0}}
    code, out = _run_cli(tmp_path, "bp-verify", cfg)
    assert code == 0
    rows = _rows(out / "bp.csv")
    assert len(rows) == 1 and rows[0][0] == "pair"


SMALL_SCAN = {
    "lattice": {"type": "chain", "n": 8},
    "betas": [0.5, 1.0],
    "params": {"radii": [2, 3, 4, 5], "fit_max": 5},
}


def test_rerun_is_identical(tmp_path):
    _, a = _run_cli(tmp_path, "cmi-scan", SMALL_SCAN, "a")
    _, b = _run_cli(tmp_path, "cmi-scan", SMALL_SCAN, "b", "--threads", "2")
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]
    assert ma["files"] == mb["files"]
    for name in ma["files"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_hash_tracks_config():
    base = resolve({}, "cmi-scan", DEFAULTS["cmi-scan"])
    same = resolve({"params": {"radii": [2, 3, 4, 5, 6]}}, "cmi-scan", DEFAULTS["cmi-scan"])
    other = resolve({"params": {"radii": [2, 3, 4, 5]}}, "cmi-scan", DEFAULTS["cmi-scan"])
    reseeded = resolve({}, "cmi-scan", DEFAULTS["cmi-scan"], seed=1)
    assert config_hash(base) == config_hash(same)
    assert config_hash(base) != config_hash(other)
    assert config_hash(base) != config_hash(reseeded)


def test_manifest_contents(tmp_path):
    code, out = _run_cli(tmp_path, "cmi-scan", SMALL_SCAN, "m", "--seed", "3")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["seed"] == 3
    assert man["config_hash"] == config_hash(man["config"])
    assert set(man["files"]) == {"cmi.csv", "fits.csv", "fits.json"}
    assert man["wall_time_s"] > 0


def test_fit_refused_below_four_points(tmp_path):
    cfg = dict(SMALL_SCAN, params={"radii": [2, 3, 4], "fit_max": 4})
    code, out = _run_cli(tmp_path, "cmi-scan", cfg)
    assert code == 0
    fits = {r[0]: r for r in _rows(out / "fits.csv")[1:]}
    assert all(r[-1] == "refused" for r in fits.values())
    per_beta = json.loads((out / "fits.json").read_text())["per_beta"]
    assert all(f["status"] == "refused" and f["n_points"] == 3 for f in per_beta.values())


def test_ising_scan_is_zero(tmp_path):
    cfg = {
        "lattice": {"type": "chain", "n": 10},
        "model": {"model": "ising", "J": 1.0, "h": 0.4},
        "betas": [1.0],
        "params": {"radii": [2, 3, 4, 5]},
    }
    code, out = _run_cli(tmp_path, "cmi-scan", cfg)
    assert code == 0
    rows = _rows(out / "cmi.csv")
    col = rows[0].index("cmi")
    assert len(rows) == 5
    assert all(abs(float(r[col])) < 1e-10 for r in rows[1:])
    # everything sits under the noise floor, so no fit is attempted
    assert _rows(out / "fits.csv")[1][-1] == "refused"


def test_nonfinite_fits_serialize(tmp_path):
    rec = run("bp-verify", resolve({"params": {"n_pairs": 0}}, "bp-verify", DEFAULTS["bp-verify"]))
    out = emit(rec, tmp_path / "e")
    fits = json.loads((out / "fits.json").read_text())
    assert fits["max_residual"] == "nan"
    assert math.isnan(rec.fits["max_residual"])


def test_console_script(tmp_path):
    cfg = _write(tmp_path, {"params": {"v0": [0.5, 1.0, 1.5, 2.0]}})
    proc = subprocess.run(
        [sys.executable, "-m", "gibbscmi.experiments.cli", "appendix-demo", "--config", cfg, "--out", str(tmp_path / "d")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout)
    assert summary["status"] == "ok" and summary["experiment"] == "appendix-demo"


def test_threads_must_be_positive(tmp_path):
    assert _run_cli(tmp_path, "appendix-demo", {}, "t", "--threads", "0")[0] == 2


def test_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["appendix-demo", "--out", str(blocker / "sub")])
    assert code == 1
    assert json.loads(capsys.readouterr().err)["exit_code"] == 1
