"""Line-oriented scenario files: experiments as data.

Grammar (blank lines and ``#`` comments allowed everywhere)::

    [params]
    n = 100            # validator count
    f = 12             # corruption budget
    m = 10             # target quorum size
    eta = 0.2          # tolerated selection shortfall rate
    gamma = 0.5        # corruption safety margin
    beta = 0.4         # quorum intersection lower rate
    alpha = 0.5        # quorum intersection upper rate
    k1 = 8             # parallel payments supported
    k2 = 16            # payment count forcing rejection
    V = 100            # candidate set size

    [genesis]
    fund g0 16 buyer0              # fund <id> <balance> <owner>[,owner...]

    [workload]
    pay buyer0 g0 seller0          # pay <buyer> <fund> <seller>
    phase                          # drain to quiescence, then continue
    settle buyer0 g0 as rest       # settle <caller> <funds> [as <alias>]
    phase
    redeem seller0 g0              # redeem <caller> <funds>
    # pay_until <buyer> <fund> <target> accepted|confirmed <sellers>
    # inject_overspend <fund> <buyer> <count>
    # seller lists accept ranges: s0..s47

    [adversary]
    policy = overspender           # passive | rushing_reorder | quorum_eraser
    clients = buyer0               #   | overspender | nonce_grinder

    [run]
    trials = 20
    seed = 7

A ``[complexity]`` section with ``sweep_n = 64,128,256`` configures the
complexity verb; the stats verb reuses ``[params]`` and ``[run]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .params import ConfigError, SystemConfig, derive_params
from .simnet import (
    BUILTIN_POLICIES,
    OpInjectOverspend,
    OpPay,
    OpPayUntil,
    OpRedeem,
    OpSettle,
)


class ScenarioError(Exception):
    """Parse or validation failure, anchored to a file line."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


_PARAM_TYPES = {
    "n": int, "f": int, "m": int, "k1": int, "k2": int, "V": int,
    "eta": float, "gamma": float, "beta": float, "alpha": float,
}
# "s0..s47" or the shorthand "s0..47"; the prefix may repeat after the dots
_RANGE = re.compile(r"^(.*?)(\d+)\.\.\1?(\d+)$")


@dataclass
class Scenario:
    path: str
    params: dict = field(default_factory=dict)
    genesis: dict = field(default_factory=dict)   # fid -> (balance, owners)
    phases: list = field(default_factory=list)
    policy_name: str = "passive"
    policy_params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    sweep_n: tuple[int, ...] = ()

    def config(self) -> SystemConfig:
        return derive_params(**self.params)

    def build_policy(self):
        return BUILTIN_POLICIES[self.policy_name]()


def _expand_names(spec: str) -> tuple[str, ...]:
    """Comma list with ``prefix0..prefix47`` range expansion."""
    names: list[str] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        m = _RANGE.match(part)
        if m:
            prefix, lo, hi = m.group(1), int(m.group(2)), int(m.group(3))
            step = 1 if hi >= lo else -1
            names.extend(f"{prefix}{i}" for i in range(lo, hi + step, step))
        else:
            names.append(part)
    return tuple(names)


def _parse_workload_line(path: str, no: int, tokens: list[str]):
    op = tokens[0]
    if op == "pay":
        if len(tokens) != 4:
            raise ScenarioError(path, no, "pay takes: buyer fund seller")
        return OpPay(buyer=tokens[1], fund=tokens[2], seller=tokens[3])
    if op == "settle":
        alias = None
        if len(tokens) >= 5 and tokens[-2] == "as":
            alias = tokens[-1]
            tokens = tokens[:-2]
        if len(tokens) != 3:
            raise ScenarioError(path, no, "settle takes: caller funds [as alias]")
        return OpSettle(caller=tokens[1], funds=_expand_names(tokens[2]), alias=alias)
    if op == "redeem":
        if len(tokens) != 3:
            raise ScenarioError(path, no, "redeem takes: caller funds")
        return OpRedeem(caller=tokens[1], funds=_expand_names(tokens[2]))
    if op == "pay_until":
        if len(tokens) != 6 or tokens[4] not in ("accepted", "confirmed"):
            raise ScenarioError(
                path, no, "pay_until takes: buyer fund target accepted|confirmed sellers"
            )
        try:
            target = int(tokens[3])
        except ValueError:
            raise ScenarioError(path, no, f"bad pay_until target {tokens[3]!r}") from None
        return OpPayUntil(
            buyer=tokens[1], fund=tokens[2], target=target,
            sellers=_expand_names(tokens[5]), mode=tokens[4],
        )
    if op == "inject_overspend":
        if len(tokens) != 4:
            raise ScenarioError(path, no, "inject_overspend takes: fund buyer count")
        try:
            count = int(tokens[3])
        except ValueError:
            raise ScenarioError(path, no, f"bad inject count {tokens[3]!r}") from None
        return OpInjectOverspend(fund=tokens[1], buyer=tokens[2], count=count)
    raise ScenarioError(path, no, f"unknown workload op {op!r}")


def parse_scenario(path: str, text: str | None = None) -> Scenario:
    if text is None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    scn = Scenario(path=path)
    section = None
    current_phase: list = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in ("params", "genesis", "workload", "adversary", "run", "complexity"):
                raise ScenarioError(path, no, f"unknown section [{name}]")
            section = name
            continue
        if section is None:
            raise ScenarioError(path, no, "content before any [section] header")
        if section == "params":
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _PARAM_TYPES:
                raise ScenarioError(path, no, f"unknown parameter {key!r}")
            try:
                scn.params[key] = _PARAM_TYPES[key](value)
            except ValueError:
                raise ScenarioError(path, no, f"bad value {value!r} for {key}") from None
        elif section == "genesis":
            tokens = line.split()
            if len(tokens) != 4 or tokens[0] != "fund":
                raise ScenarioError(path, no, "genesis lines: fund <id> <balance> <owners>")
            fid = tokens[1]
            if fid in scn.genesis:
                raise ScenarioError(path, no, f"duplicate fund id {fid!r}")
            try:
                balance = int(tokens[2])
            except ValueError:
                raise ScenarioError(path, no, f"bad balance {tokens[2]!r}") from None
            if balance <= 0:
                raise ScenarioError(path, no, "fund balance must be positive")
            scn.genesis[fid] = (balance, _expand_names(tokens[3]))
        elif section == "workload":
            tokens = line.split()
            if tokens[0] == "phase":
                if current_phase:
                    scn.phases.append(current_phase)
                    current_phase = []
                continue
            current_phase.append(_parse_workload_line(path, no, tokens))
        elif section == "adversary":
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "policy":
                if value not in BUILTIN_POLICIES:
                    known = ", ".join(sorted(BUILTIN_POLICIES))
                    raise ScenarioError(path, no, f"unknown policy {value!r} (known: {known})")
                scn.policy_name = value
            else:
                scn.policy_params[key] = value
        elif section == "run":
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in ("trials", "seed"):
                raise ScenarioError(path, no, f"unknown run setting {key!r}")
            try:
                setattr(scn, key, int(value))
            except ValueError:
                raise ScenarioError(path, no, f"bad value {value!r} for {key}") from None
        elif section == "complexity":
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key != "sweep_n":
                raise ScenarioError(path, no, f"unknown complexity setting {key!r}")
            try:
                scn.sweep_n = tuple(int(v) for v in value.split(","))
            except ValueError:
                raise ScenarioError(path, no, f"bad sweep list {value!r}") from None
    if current_phase:
        scn.phases.append(current_phase)
    _validate(scn)
    return scn


def _validate(scn: Scenario) -> None:
    path, no = scn.path, 0
    if scn.trials < 1:
        raise ScenarioError(path, no, "trials must be >= 1")
    try:
        scn.config()
    except (ConfigError, TypeError) as exc:
        raise ScenarioError(path, no, f"invalid [params]: {exc}") from None
    known_funds = set(scn.genesis)
    aliases: set[str] = set()
    for phase in scn.phases:
        for op in phase:
            if isinstance(op, OpSettle) and op.alias:
                aliases.add(op.alias)
    for phase in scn.phases:
        for op in phase:
            if isinstance(op, (OpPay, OpPayUntil, OpInjectOverspend)):
                refs = (op.fund,)
            else:
                refs = op.funds
            for ref in refs:
                if ref not in known_funds and ref not in aliases:
                    raise ScenarioError(path, no, f"workload references unknown fund {ref!r}")
