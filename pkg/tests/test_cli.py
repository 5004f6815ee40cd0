"""Command line behaviour, exercised through real subprocesses."""

import os
import subprocess
import sys
from pathlib import Path

import pytest

PKG_ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = PKG_ROOT / "scenarios"

TINY = """\
[params]
n = 40
f = 4
m = 3
eta = 0.5
gamma = 0.5
beta = 0.4
alpha = 0.5
k1 = 2
k2 = 4
V = 20

[genesis]
fund g0 20 buyer0

[workload]
pay buyer0 g0 seller0
phase
settle buyer0 g0

[run]
trials = 2
seed = 32
"""


def cli(args, cwd, env_extra=None):
    env = dict(os.environ)
    env.pop("SIM_STEP_BUDGET", None)
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "fracspend.cli", *args],
        cwd=cwd, env=env, capture_output=True, text=True, timeout=600,
    )


@pytest.fixture()
def tiny(tmp_path):
    path = tmp_path / "tiny.scn"
    path.write_text(TINY)
    return path


def test_version_flag(tmp_path):
    proc = cli(["--version"], tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("fracspend ")


def test_run_writes_report_and_figures(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--out", "r.txt"], tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "PASS: 2 trial(s), report r.txt, figures 3"
    report = (tmp_path / "r.txt").read_text()
    assert "[aggregate]" in report and "safety_pass_rate = 1.000000" in report
    figures = sorted(p.name for p in tmp_path.glob("*.png"))
    assert figures == ["r_depths.png", "r_messages.png", "r_selection.png"]


def test_run_no_figures_leaves_report_bytes_alone(tiny, tmp_path):
    with_figs = cli(["run", "tiny.scn", "--out", "a.txt"], tmp_path)
    without = cli(["run", "tiny.scn", "--out", "b.txt", "--no-figures"], tmp_path)
    assert with_figs.returncode == 0 and without.returncode == 0
    assert "figures" not in without.stdout
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert not list(tmp_path.glob("b_*.png"))


def test_run_default_report_path_uses_scenario_stem(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--no-figures"], tmp_path)
    assert proc.returncode == 0
    assert (tmp_path / "tiny_report.txt").exists()


def test_repeated_and_pooled_runs_are_byte_identical(tiny, tmp_path):
    cli(["run", "tiny.scn", "--out", "a.txt", "--no-figures"], tmp_path)
    cli(["run", "tiny.scn", "--out", "b.txt", "--no-figures"], tmp_path)
    cli(["run", "tiny.scn", "--out", "c.txt", "--no-figures", "--workers", "4"],
        tmp_path)
    first = (tmp_path / "a.txt").read_bytes()
    assert first == (tmp_path / "b.txt").read_bytes()
    assert first == (tmp_path / "c.txt").read_bytes()


def test_override_rewrites_a_parameter(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--out", "o.txt", "--no-figures",
                "--override", "n=48"], tmp_path)
    assert proc.returncode == 0
    assert "n = 48" in (tmp_path / "o.txt").read_text()


def test_unknown_override_key_is_a_parse_error(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--override", "bogus=1"], tmp_path)
    assert proc.returncode == 2
    assert "unknown override key" in proc.stderr


def test_malformed_override_is_a_parse_error(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--override", "n"], tmp_path)
    assert proc.returncode == 2
    assert "not KEY=VALUE" in proc.stderr


def test_invalid_parameter_combination_is_a_parse_error(tiny, tmp_path):
    # n = 30 violates the corruption bound n > 8f for f = 4
    proc = cli(["run", "tiny.scn", "--override", "n=30"], tmp_path)
    assert proc.returncode == 2
    assert "invalid parameters" in proc.stderr


def test_scenario_syntax_error_reports_path_and_line(tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text("[params]\nn = forty\n")
    proc = cli(["run", "bad.scn"], tmp_path)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error: bad.scn:2:")


def test_missing_scenario_file_is_a_parse_error(tmp_path):
    proc = cli(["run", "nope.scn"], tmp_path)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error:")


def test_injected_double_spend_fails_safety(tmp_path):
    proc = cli(["run", str(SCENARIOS / "double_spend_injected.scn"),
                "--out", "d.txt", "--no-figures"], tmp_path)
    assert proc.returncode == 1
    assert proc.stdout.startswith("SAFETY-FAIL: 1 trial(s)")
    assert "accepted-cap" in (tmp_path / "d.txt").read_text()


def test_step_budget_env_variable_flags_liveness(tiny, tmp_path):
    proc = cli(["run", "tiny.scn", "--out", "l.txt", "--no-figures"],
               tmp_path, env_extra={"SIM_STEP_BUDGET": "40"})
    assert proc.returncode == 3
    assert proc.stdout.startswith("LIVENESS-FAIL: 2 trial(s)")
    report = (tmp_path / "l.txt").read_text()
    assert "step_budget = 40" in report
    assert "liveness_pass_rate = 0.000000" in report


def test_stats_verb_reports_shortfall_within_bound(tiny, tmp_path):
    proc = cli(["stats", "tiny.scn", "--out", "s.txt", "--no-figures",
                "--trials", "200"], tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.startswith("PASS: shortfall ")
    report = (tmp_path / "s.txt").read_text()
    assert "[selection]" in report
    assert "within_bound = 1" in report


def test_complexity_verb_reports_scaling_ratios(tmp_path):
    proc = cli(["complexity", str(SCENARIOS / "complexity.scn"),
                "--out", "c.txt", "--no-figures", "--trials", "3"], tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.startswith("PASS: sweep over n=[64, 128, 256]")
    report = (tmp_path / "c.txt").read_text()
    assert "within_tolerance = 1" in report


def test_shipped_honest_scenarios_pass(tmp_path):
    for name in ("pay_honest.scn", "multi_owner.scn"):
        proc = cli(["run", str(SCENARIOS / name), "--out", "x.txt",
                    "--no-figures"], tmp_path)
        assert proc.returncode == 0, (name, proc.stdout, proc.stderr)
