import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pp04graze.cli import COMMANDS, run, validate_config
from pp04graze.errors import OutOfRange, UnknownKey


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_example(tmp_path):
    out = tmp_path / "sim"
    rc = run(["simulate", "--omega", "0.115", "--mu", "0.3", "--v0", "0.3636", "--a0", "0.2089",
              "--c0", "0.2356", "--t-end", "500", "--out", str(out)])
    assert rc == 0
    ev = _read_csv(out / "events.csv")
    ups = [float(r["t"]) for r in ev if r["kind"] == "cross-+"]
    np.testing.assert_allclose(np.diff(ups), 3 * 2 * np.pi / 0.115, atol=1e-3)
    rows = _read_csv(out / "trajectory.csv")
    assert list(rows[0]) == ["t", "V", "A", "C", "F", "region"]
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "ok" and m["config"]["omega"] == 0.115
    assert set(m["outputs"]) == {"trajectory.csv", "events.csv"}


def test_grazing_times_example(tmp_path):
    assert run(["grazing-times", "--omega", "0.115", "--mu", "0.3", "--t-max", "250",
                "--out", str(tmp_path)]) == 0
    t = [float(r["t"]) for r in _read_csv(tmp_path / "grazing_times.csv")]
    for listed in (17.78, 40.65, 72.41, 95.28, 127.05, 181.69, 236.32):
        assert min(abs(np.array(t) - listed)) < 0.01


def test_manifest_roundtrip_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--t-end", "300", "--d", "0.25", "--out", str(a)]) == 0
    assert run(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("trajectory.csv", "events.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_identical_for_worker_counts(tmp_path):
    args = ["sweep", "--from", "0.113", "--to", "0.115", "--step", "0.001", "--samples", "2",
            "--seed", "42", "--refine", "false"]
    assert run(args + ["--workers", "1", "--out", str(tmp_path / "w1")]) == 0
    assert run(args + ["--workers", "2", "--out", str(tmp_path / "w2")]) == 0
    assert (tmp_path / "w1/sweep.csv").read_bytes() == (tmp_path / "w2/sweep.csv").read_bytes()


def test_config_file_layering(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("# comment\nd = 0.24\nmu = 0.2\n\n")
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(cfg), "--mu", "0.3", "--t-end", "10", "--out", str(out)]) == 0
    c = json.loads((out / "manifest.json").read_text())["config"]
    assert c["d"] == 0.24 and c["mu"] == 0.3 and c["eta"] == 1500.0


def test_validate_config_file(tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    params, forcing = validate_config(empty)
    assert params.eta == 1500.0 and params.d == 0.27
    one = tmp_path / "one.cfg"
    one.write_text("d = 0.24\n")
    params, _ = validate_config(one)
    assert params.d == 0.24 and params.gamma == 0.7
    bad = tmp_path / "bad.cfg"
    bad.write_text("d = 0.24\ntau_V = -1\n")
    with pytest.raises(OutOfRange) as exc:
        validate_config(bad)
    assert exc.value.line == 2 and exc.value.key == "tau_V"
    unk = tmp_path / "unk.cfg"
    unk.write_text("\nbogus = 1\n")
    with pytest.raises(UnknownKey) as exc:
        validate_config(unk)
    assert exc.value.line == 2


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("omegaa = 0.1\n")
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "omegaa" in capsys.readouterr().err
    assert run(["simulate", "--tau-V", "-3", "--out", str(tmp_path / "o")]) == 2
    assert "tau_V" in capsys.readouterr().err


def test_model_error_exit_code(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["grazing-ic", "--v-lo", "0.2", "--v-hi", "0.3", "--out", str(out)]) == 1
    assert "BracketInvalid" in capsys.readouterr().err
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "error" and m["error"]["kind"] == "BracketInvalid"


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("GRZ_SEED", "17")
    assert run(["grazing-times", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 17
    assert run(["grazing-times", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 3


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_flags_and_schema(command):
    res = subprocess.run([sys.executable, "-m", "pp04graze.cli", command, "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for key in COMMANDS[command]["keys"]:
        assert "--" + key.replace("_", "-") in res.stdout
    assert "outputs:" in res.stdout
    first_file = COMMANDS[command]["schema"].split(":")[0]
    assert first_file in res.stdout


def test_probe_and_orbit_commands(tmp_path):
    assert run(["probe-sqrt", "--eps-count", "9", "--out", str(tmp_path / "p")]) == 0
    rep = json.loads((tmp_path / "p/probe.json").read_text())
    assert abs(rep["exponent"] - 0.5) < 0.05
    assert run(["orbit", "--out", str(tmp_path / "o")]) == 0
    orb = json.loads((tmp_path / "o/orbit.json").read_text())
    assert orb["class"] == "(1,3)"


def test_quasi_requires_second_term(tmp_path):
    assert run(["quasi", "--out", str(tmp_path)]) == 2
    assert run(["quasi", "--mu2", "0.2", "--omega", "0.13", "--t-end", "1500", "--out", str(tmp_path)]) == 0
