"""Deterministic text reports: stable key order, fixed float formatting.

A report is a sequence of ``[section]`` blocks with ``key = value`` lines
plus one whitespace-delimited per-trial table.  Byte-identical output for
identical (scenario, seed) pairs is a hard requirement, so every float goes
through the same formatter and every iteration order is explicit.
"""

from __future__ import annotations

import math
from fractions import Fraction

from . import __version__
from .params import SystemConfig

# op kinds folded into the three protocol operations for reporting
_OP_GROUPS = {
    "pay": ("pay", "payuntil"),
    "settle": ("settle",),
    "redeem": ("redeem",),
}


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, Fraction):
        return str(value)
    return str(value)


def mean_stddev(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mu = sum(values) / len(values)
    var = sum((v - mu) ** 2 for v in values) / len(values)
    return mu, math.sqrt(var)


def _group_counts(metrics) -> dict[str, int]:
    counts = {}
    for group, kinds in _OP_GROUPS.items():
        counts[group] = sum(metrics.messages_by_op.get(k, 0) for k in kinds)
    counts["other"] = sum(
        v for k, v in metrics.messages_by_op.items()
        if k not in ("pay", "payuntil", "settle", "redeem")
    )
    return counts


def _outcome_totals(results) -> dict[tuple[str, str], int]:
    totals: dict[tuple[str, str], int] = {}
    for res in results:
        for _op_id, kind, status, _detail in res.metrics.outcomes:
            key = (kind, status)
            totals[key] = totals.get(key, 0) + 1
    return totals


def _safety_ok(metrics) -> bool:
    return metrics.conformance is not None and metrics.conformance.passed


def render_run_report(scenario_name: str, cfg: SystemConfig, results, *,
                      seed: int, step_budget: int) -> str:
    lines: list[str] = []
    out = lines.append

    out("[meta]")
    out(f"tool = fracspend {__version__}")
    out(f"scenario = {scenario_name}")
    out(f"seed = {seed}")
    out(f"trials = {len(results)}")
    out(f"step_budget = {step_budget}")
    out("")

    out("[config]")
    for key, value in cfg.as_dict().items():
        out(f"{key} = {fmt(value)}")
    out("")

    safety = [_safety_ok(r.metrics) for r in results]
    live = [not r.metrics.non_quiescent for r in results]
    steps = [float(r.metrics.steps) for r in results]
    groups = [_group_counts(r.metrics) for r in results]
    all_signed = [c for r in results for c in r.metrics.selection_counts.values()]
    shortfall = sum(1 for c in all_signed if c < cfg.m)
    seller_depths = sorted(
        p["seller"] for r in results for p in r.metrics.pay_paths.values() if "seller" in p
    )
    buyer_depths = sorted(
        p["buyer"] for r in results for p in r.metrics.pay_paths.values() if "buyer" in p
    )

    out("[aggregate]")
    out(f"safety_pass_rate = {fmt(sum(safety) / len(results))}")
    out(f"liveness_pass_rate = {fmt(sum(live) / len(results))}")
    mu, sd = mean_stddev(steps)
    out(f"mean_steps = {fmt(mu)}")
    out(f"stddev_steps = {fmt(sd)}")
    for group in ("pay", "settle", "redeem", "other"):
        mu, sd = mean_stddev([float(g[group]) for g in groups])
        out(f"mean_messages_{group} = {fmt(mu)}")
        out(f"stddev_messages_{group} = {fmt(sd)}")
    out(f"observed_validations = {len(all_signed)}")
    rate = shortfall / len(all_signed) if all_signed else 0.0
    out(f"selection_shortfall_rate = {fmt(rate)}")
    accepted = sum(sum(r.metrics.accepted_by_fund.values()) for r in results)
    out(f"accepted_payments = {accepted}")
    if seller_depths:
        out(f"pay_depth_seller_min = {seller_depths[0]}")
        out(f"pay_depth_seller_max = {seller_depths[-1]}")
    if buyer_depths:
        out(f"pay_depth_buyer_min = {buyer_depths[0]}")
        out(f"pay_depth_buyer_max = {buyer_depths[-1]}")
    corrupted = sorted({v for r in results for v in r.metrics.corrupted_validators})
    out(f"corrupted_validator_pool = {len(corrupted)}")
    out("")

    out("[outcomes]")
    for (kind, status), count in sorted(_outcome_totals(results).items()):
        out(f"{kind}.{status} = {count}")
    out("")

    out("[trials]")
    out("trial seed steps quiesced safety clause msgs_pay msgs_settle msgs_redeem "
        "accepted sales settles redeems")
    for i, res in enumerate(results):
        m = res.metrics
        group = _group_counts(m)
        clause = "-"
        if m.conformance is not None and not m.conformance.passed:
            clause = m.conformance.clause
        sales = sum(1 for _o, k, s, _d in m.outcomes if k == "sale" and s == "confirmed")
        settles = sum(1 for _o, k, s, _d in m.outcomes
                      if k == "settle" and s in ("settled", "exhausted"))
        redeems = sum(1 for _o, k, s, _d in m.outcomes if k == "redeem" and s == "redeemed")
        out(" ".join(str(v) for v in (
            i, m.seed, m.steps, fmt(not m.non_quiescent), fmt(_safety_ok(m)), clause,
            group["pay"], group["settle"], group["redeem"],
            sum(m.accepted_by_fund.values()), sales, settles, redeems,
        )))
    out("")
    return "\n".join(lines)


def render_stats_report(scenario_name: str, stats: dict, *, seed: int) -> str:
    """Selection statistics: observed shortfall frequency next to the bound."""
    lines = [
        "[meta]",
        f"tool = fracspend {__version__}",
        f"scenario = {scenario_name}",
        f"seed = {seed}",
        "",
        "[selection]",
    ]
    for key in ("k", "eta", "V", "n", "k_prime", "threshold", "trials",
                "observed_shortfall", "observed_rate", "bound", "stderr",
                "limit", "within_bound", "mean_selected"):
        lines.append(f"{key} = {fmt(stats[key])}")
    lines.append("")
    return "\n".join(lines)


def render_complexity_report(scenario_name: str, rows: list[dict], checks: dict, *,
                             seed: int) -> str:
    """Message-count scaling table over the n sweep plus doubling ratios."""
    lines = [
        "[meta]",
        f"tool = fracspend {__version__}",
        f"scenario = {scenario_name}",
        f"seed = {seed}",
        "",
        "[complexity]",
        "n trials mean_pay mean_settle mean_redeem",
    ]
    for row in rows:
        lines.append(" ".join(fmt(row[k]) for k in
                              ("n", "trials", "mean_pay", "mean_settle", "mean_redeem")))
    lines.append("")
    lines.append("[ratios]")
    for key in sorted(checks):
        lines.append(f"{key} = {fmt(checks[key])}")
    lines.append("")
    return "\n".join(lines)
