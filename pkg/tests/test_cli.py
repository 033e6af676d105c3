import json
import subprocess
import sys
from pathlib import Path

import pytest

from rhometric import __version__
from rhometric.cli import EXPERIMENT_KINDS, config_hash, main, parse_config, run_experiment
from rhometric.errors import ConfigError
from rhometric.experiments import EXPERIMENTS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ------------------------------------------------------------------ parsing


def test_parse_examples():
    cfg = parse_config("experiment=dims-sanity\nseed=1\ngrid.depth=10\ndensity.beta=-0.5  # note\n")
    assert cfg.experiment == "dims-sanity" and cfg.seed == 1
    assert cfg.get("grid.depth", 0) == 10
    assert cfg.get("density.beta", 0.0) == -0.5
    assert cfg.get("ladder.count", 7) == 7


def test_parse_comments_and_blanks():
    cfg = parse_config("# header\n\nexperiment = cantor-beta \n  seed=3\n")
    assert cfg.experiment == "cantor-beta" and cfg.seed == 3


def test_parse_bad_value_line_number():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("experiment=dims-sanity\nseed=0\ngrid.depth=banana\n")


@pytest.mark.parametrize("text,msg", [
    ("experiment=dims-sanity\nseed=0\ngrid.dpeth=3\n", "line 3: unknown key"),
    ("experiment=dims-sanity\nseed=0\nseed=1\n", "line 3: duplicate"),
    ("experiment=dims-sanity\nnonsense\n", "line 2: expected key=value"),
    ("seed=0\n", "missing required key 'experiment'"),
    ("experiment=dims-sanity\n", "missing required key 'seed'"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_config_hash_order_independent():
    a = parse_config("experiment=dims-sanity\nseed=0\nladder.count=8\n")
    b = parse_config("ladder.count=8\nseed=0\nexperiment=dims-sanity\n")
    c = parse_config("ladder.count=9\nseed=0\nexperiment=dims-sanity\n")
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_kind_mismatch():
    cfg = parse_config("experiment=cantor-beta\nseed=0\ndensity.type=triadic\n")
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_every_experiment_has_a_config():
    assert set(EXPERIMENTS) == set(EXPERIMENT_KINDS)
    for name in EXPERIMENTS:
        cfg = parse_config((CONFIGS / f"{name}.cfg").read_text())
        assert cfg.experiment == name


# ---------------------------------------------------------------- running


def test_run_pass_exit_zero(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", str(CONFIGS / "dims-sanity.cfg"), "--out", str(out)])
    assert rc == 0
    assert "dims-sanity: PASS" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is True
    assert report["version"] == __version__
    assert len(report["config_hash"]) == 64
    assert (out / "counts.csv").read_text().startswith("r,count,variant\n")
    assert (out / "dims.csv").exists()


def test_run_fail_exit_two(tmp_path):
    cfg = write_cfg(tmp_path, "experiment=triadic-spectrum\nseed=0\npredicted=1.0\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2


def test_run_errors_exit_one(tmp_path, capsys):
    assert main(["run", write_cfg(tmp_path, "experiment=nope\nseed=0\n")]) == 1
    assert "unknown experiment" in capsys.readouterr().err
    assert main(["run", write_cfg(tmp_path, "experiment=dims-sanity\nseed=0\nbad.key=1\n")]) == 1
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1


def test_reruns_byte_identical(tmp_path):
    cfg = str(CONFIGS / "exp-density-bound.cfg")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--out", str(a)]) == 0
    assert main(["run", cfg, "--out", str(b), "--seed", "0"]) == 0
    names = sorted(p.name for p in a.glob("*.csv"))
    assert names == sorted(p.name for p in b.glob("*.csv"))
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    ra, rb = (json.loads((d / "report.json").read_text()) for d in (a, b))
    ra.pop("runtime_s"), rb.pop("runtime_s")
    assert ra == rb


def test_depth_override(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "exp-density-bound.cfg"), "--out", str(out), "--depth", "9"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["grid.depth"] == "9"


def test_list(capsys):
    assert main(["list"]) == 0
    names = [ln.split()[0] for ln in capsys.readouterr().out.splitlines()]
    assert names == list(EXPERIMENTS)


def test_spectrum_command(capsys):
    assert main(["spectrum", "--beta", "-0.5", "--lambda", "-0.3333333333333333", "--steps", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,dim_d,dim_rho"
    assert len(lines) == 6
    assert lines[-1].startswith("# f_max ")
    payload = json.loads(lines[-1][len("# f_max "):])
    assert 1.64 <= payload["value"] <= 1.66


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "rhometric.cli", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "cantor-beta" in r.stdout
