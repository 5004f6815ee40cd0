"""Scenario file grammar, expansion, and line-anchored errors."""

import glob
import os

import pytest

from fracspend.scenario import ScenarioError, parse_scenario, _expand_names
from fracspend.simnet import (
    OpInjectOverspend,
    OpPay,
    OpPayUntil,
    OpRedeem,
    OpSettle,
)

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")

GOOD = """
# comment-only line
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
fund g0 16 buyer0          # trailing comment
fund g1 8 alice,bob

[workload]
pay buyer0 g0 seller0
pay buyer0 g0 seller1
phase
settle buyer0 g0 as rest
phase
pay_until alice g1 2 confirmed s0..s3,extra
redeem seller0 g0
inject_overspend g1 alice 3

[adversary]
policy = rushing_reorder
knob = 17

[run]
trials = 5
seed = 99

[complexity]
sweep_n = 40,80
"""


def parse_text(text, path="inline.scn"):
    return parse_scenario(path, text=text)


def test_full_grammar_round_trip():
    scn = parse_text(GOOD)
    assert scn.params["n"] == 40 and scn.params["eta"] == 0.5
    assert scn.genesis == {"g0": (16, ("buyer0",)), "g1": (8, ("alice", "bob"))}
    assert scn.trials == 5 and scn.seed == 99
    assert scn.policy_name == "rushing_reorder"
    assert scn.policy_params == {"knob": "17"}
    assert scn.sweep_n == (40, 80)
    assert len(scn.phases) == 3
    assert scn.phases[0] == [
        OpPay("buyer0", "g0", "seller0"),
        OpPay("buyer0", "g0", "seller1"),
    ]
    assert scn.phases[1] == [OpSettle("buyer0", ("g0",), alias="rest")]
    assert scn.phases[2] == [
        OpPayUntil("alice", "g1", 2, ("s0", "s1", "s2", "s3", "extra"), mode="confirmed"),
        OpRedeem("seller0", ("g0",)),
        OpInjectOverspend("g1", "alice", 3),
    ]
    assert scn.config().q == 2
    assert scn.build_policy().name == "rushing_reorder"


def test_name_range_expansion():
    assert _expand_names("a0..a3") == ("a0", "a1", "a2", "a3")
    assert _expand_names("x, y ,z") == ("x", "y", "z")
    assert _expand_names("s2..s0") == ("s2", "s1", "s0")
    assert _expand_names("v7..v7,w1") == ("v7", "w1")
    assert _expand_names("plain") == ("plain",)


def replace_line(needle, replacement):
    assert needle in GOOD
    return GOOD.replace(needle, replacement)


@pytest.mark.parametrize(
    "mutation, fragment",
    [
        (("[run]", "[misc]"), "unknown section"),
        (("n = 40", "bogus = 40"), "unknown parameter"),
        (("n = 40", "n = forty"), "bad value"),
        (("fund g1 8 alice,bob", "fund g0 8 alice"), "duplicate fund"),
        (("fund g1 8 alice,bob", "fund g1 zero alice"), "bad balance"),
        (("fund g1 8 alice,bob", "fund g1 0 alice"), "must be positive"),
        (("fund g1 8 alice,bob", "coin g1 8 alice"), "genesis lines"),
        (("pay buyer0 g0 seller0", "pay buyer0 g0"), "pay takes"),
        (("settle buyer0 g0 as rest", "settle buyer0"), "settle takes"),
        (("redeem seller0 g0", "redeem seller0"), "redeem takes"),
        (("pay_until alice g1 2 confirmed s0..s3,extra",
          "pay_until alice g1 2 sometimes s0"), "pay_until takes"),
        (("pay_until alice g1 2 confirmed s0..s3,extra",
          "pay_until alice g1 two confirmed s0"), "bad pay_until target"),
        (("inject_overspend g1 alice 3", "inject_overspend g1 alice"), "inject_overspend takes"),
        (("inject_overspend g1 alice 3", "inject_overspend g1 alice many"), "bad inject count"),
        (("pay buyer0 g0 seller0", "teleport buyer0 g0 seller0"), "unknown workload op"),
        (("policy = rushing_reorder", "policy = chaos_monkey"), "unknown policy"),
        (("trials = 5", "cycles = 5"), "unknown run setting"),
        (("trials = 5", "trials = soon"), "bad value"),
        (("sweep_n = 40,80", "sweep_m = 40"), "unknown complexity setting"),
        (("sweep_n = 40,80", "sweep_n = big"), "bad sweep list"),
        (("pay buyer0 g0 seller0", "pay buyer0 gX seller0"), "unknown fund 'gX'"),
    ],
)
def test_errors_name_the_problem(mutation, fragment):
    with pytest.raises(ScenarioError) as exc:
        parse_text(replace_line(*mutation))
    assert fragment in str(exc.value)


def test_errors_are_anchored_to_their_line():
    bad = replace_line("fund g1 8 alice,bob", "fund g1 zero alice")
    with pytest.raises(ScenarioError) as exc:
        parse_text(bad, path="exp/bad.scn")
    line_no = bad.splitlines().index("fund g1 zero alice") + 1
    assert str(exc.value).startswith(f"exp/bad.scn:{line_no}: ")
    assert exc.value.path == "exp/bad.scn"
    assert exc.value.line_no == line_no


def test_content_before_sections_is_rejected():
    with pytest.raises(ScenarioError) as exc:
        parse_text("n = 40\n")
    assert "before any [section]" in str(exc.value)
    assert "inline.scn:1:" in str(exc.value)


def test_inconsistent_params_fail_validation():
    with pytest.raises(ScenarioError) as exc:
        parse_text(replace_line("n = 40", "n = 30"))  # violates n > 8f
    assert "invalid [params]" in str(exc.value)
    with pytest.raises(ScenarioError) as exc:
        parse_text(GOOD.replace("[params]\nn = 40\n", "[params]\n"))  # n missing
    assert "invalid [params]" in str(exc.value)


def test_trials_must_be_positive():
    with pytest.raises(ScenarioError) as exc:
        parse_text(replace_line("trials = 5", "trials = 0"))
    assert "trials must be >= 1" in str(exc.value)


def test_settle_alias_satisfies_fund_references():
    text = replace_line("redeem seller0 g0", "redeem seller0 rest")
    scn = parse_text(text)
    assert OpRedeem("seller0", ("rest",)) in scn.phases[2]


def test_missing_file_raises_file_not_found():
    with pytest.raises(FileNotFoundError):
        parse_scenario("/nonexistent/path.scn")


def test_all_shipped_scenarios_parse_and_validate():
    paths = sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.scn")))
    assert len(paths) == 10
    for path in paths:
        scn = parse_scenario(path)
        cfg = scn.config()  # raises if the parameter set is inconsistent
        assert cfg.q <= cfg.w
        assert scn.trials >= 1
