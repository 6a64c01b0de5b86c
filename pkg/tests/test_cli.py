import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ssem_ukf import io as sio
from ssem_ukf.cli import main
from ssem_ukf.config import KEYS
from ssem_ukf.model import ShellGrid, default_initial_population

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEMO = os.path.join(ROOT, "demo", "config.toml")
SAMPLE = os.path.join(ROOT, "demo", "sample_members.csv")
SMALL = ["--config", DEMO, "--set", "ensemble.n_members=20", "--set", "ensemble.horizon=4",
         "--set", "filter.horizon=6"]


def run(*args):
    return main([str(a) for a in args])


def test_zero_horizon_single_row(tmp_path):
    assert run("propagate", *SMALL, "--out", tmp_path, "--set", "propagate.horizon=0") == 0
    times, traj = sio.read_trajectory_csv(str(tmp_path / "propagate_populations.csv"))
    assert times.tolist() == [0.0]
    pop0 = default_initial_population(ShellGrid(h_min=400.0, n_shells=8)).as_array()
    assert np.array_equal(traj[0], pop0)


def test_modes_agree(tmp_path):
    base = ["propagate", *SMALL, "--out", tmp_path, "--set", "propagate.horizon=30"]
    assert run(*base) == 0
    assert run(*base, "--set", "propagate.mode=augmented") == 0
    a = (tmp_path / "propagate_populations.csv").read_text().splitlines()
    b = (tmp_path / "propagate_augmented.csv").read_text().splitlines()
    assert a[0] == b[0]
    _, ta = sio.read_trajectory_csv(str(tmp_path / "propagate_populations.csv"))
    _, tb = sio.read_trajectory_csv(str(tmp_path / "propagate_augmented.csv"))
    np.testing.assert_allclose(ta, tb, rtol=1e-9)


def test_filter_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("filter", *SMALL, "--seed", 42, "--out", tmp_path / d) == 0
    for name in ("filter_trace.csv", "filter_summary.json", "phi_table.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run("filter", *SMALL, "--seed", 43, "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "filter_trace.csv").read_bytes() != (tmp_path / "c" / "filter_trace.csv").read_bytes()


def test_pipeline(tmp_path):
    out = tmp_path / "o"
    for cmd in ("ensemble", "fit-index", "filter", "report"):
        assert run(cmd, *SMALL, "--out", out, "--threads", 2) == 0, cmd
    report = json.loads((out / "report.json").read_text())
    assert report["phi_table"]["unit"] == 1e-8
    assert len(report["phi_table"]["rows"]) == 8
    assert (out / "report_phi_table.csv").read_text().startswith("shell,phi_SS_ukf,")
    summary = json.loads((out / "ensemble_summary.json").read_text())
    assert summary["n_members"] == 20


def test_filter_from_moments_file(tmp_path):
    out = tmp_path / "o"
    assert run("ensemble", *SMALL, "--out", out, "--set", "ensemble.write_members=false") == 0
    assert not (out / "members.csv").exists()
    assert run("filter", *SMALL, "--out", out, "--set", f"filter.moments={out / 'moments.csv'}",
               "--set", "filter.horizon=4") == 0
    s = json.loads((out / "filter_summary.json").read_text())
    assert s["measured_steps"] == 4 and s["source"].endswith("moments.csv")


def test_report_requires_inputs(tmp_path, capsys):
    assert run("report", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "fit_index.csv" in err and "filter_trace.csv" in err


def test_fit_index_missing_members(tmp_path, capsys):
    assert run("fit-index", "--out", tmp_path) == 2
    assert "members.csv" in capsys.readouterr().err


def test_unknown_key_is_usage_error(tmp_path, capsys):
    assert run("propagate", "--out", tmp_path, "--set", "model.nope=1") == 2
    assert "model.nope" in capsys.readouterr().err


def test_bad_value_is_usage_error(tmp_path):
    assert run("propagate", "--out", tmp_path, "--set", "model.pmd=2") == 2


def test_sample_ranks_gamma_first_for_debris(tmp_path):
    assert run("fit-index", "--out", tmp_path, "--set", f"fit.members={SAMPLE}") == 0
    summary = json.loads((tmp_path / "fit_summary.json").read_text())
    debris = [b["best"] for b in summary["best"] if b["species"] == "N"]
    assert debris and all(b == "gamma" for b in debris)


@pytest.mark.parametrize("cmd", ["propagate", "ensemble", "fit-index", "filter", "report"])
def test_help_lists_every_key(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        main([cmd, "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for key in KEYS:
        assert key.name in text
    for flag in ("--config", "--seed", "--out", "--threads", "--set"):
        assert flag in text


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["propagate", "--seed", "notanumber"])
    assert info.value.code == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ssem_ukf.cli", "propagate", *map(str, SMALL),
                           "--out", str(tmp_path), "--set", "propagate.horizon=2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "propagate_populations.csv").exists()
