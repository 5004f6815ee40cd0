"""Trial execution, selection statistics and complexity sweeps.

Trials expand a base seed into independent per-trial seeds through
splitmix64 folding, so a trial's outcome depends only on (scenario, base
seed, trial index).  Aggregation folds results in trial-index order,
which keeps serial and worker-pool execution byte-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from .params import MAX_PER_CANDIDATE, chernoff_lower_tail
from .rvrf import RvrfProvider, keygen
from .scenario import Scenario
from .simnet import RunResult, Simulation, derive_seed

EXIT_OK = 0
EXIT_SAFETY = 1
EXIT_PARSE = 2
EXIT_LIVENESS = 3

_TRIAL_STREAM = 1000
_STATS_STREAM = 5000


def trial_seed(base_seed: int, index: int) -> int:
    return derive_seed(base_seed, _TRIAL_STREAM + index)


def run_one(scenario: Scenario, index: int, base_seed: int,
            step_budget: int | None = None) -> RunResult:
    sim = Simulation(
        scenario.config(),
        scenario.genesis,
        scenario.phases,
        policy=scenario.build_policy(),
        seed=trial_seed(base_seed, index),
        step_budget=step_budget,
        policy_params=scenario.policy_params,
    )
    return sim.run()


def run_trials(scenario: Scenario, *, seed: int | None = None,
               trials: int | None = None, step_budget: int | None = None,
               workers: int = 1) -> list[RunResult]:
    base = scenario.seed if seed is None else seed
    count = scenario.trials if trials is None else trials
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_one, scenario, i, base, step_budget)
                for i in range(count)
            ]
            return [future.result() for future in futures]
    return [run_one(scenario, i, base, step_budget) for i in range(count)]


def classify(results: list[RunResult]) -> int:
    """Exit code for a batch: safety failures outrank liveness failures."""
    if any(r.metrics.conformance is None or not r.metrics.conformance.passed
           for r in results):
        return EXIT_SAFETY
    if any(r.metrics.non_quiescent for r in results):
        return EXIT_LIVENESS
    return EXIT_OK


def selection_stats(*, k: int, eta: float, V: int, n: int,
                    trials: int, seed: int) -> dict:
    """Monte-Carlo shortfall frequency of threshold self-selection.

    Each trial evaluates all V candidates against a fresh seed and counts
    how often fewer than k fall under the threshold, compared with the
    lower-tail bound exp(-eta^2 k / (2 (1 - eta))) plus three binomial
    standard errors.
    """
    k_exact = Fraction(k)
    eta_exact = Fraction(str(eta))
    k_prime = k_exact / (1 - eta_exact)
    max_out = MAX_PER_CANDIDATE * V
    threshold = min((k_prime * max_out // V), max_out)
    provider = RvrfProvider(max_out, salt_seed=derive_seed(seed, 7))
    keys = [keygen(f"cand{i:05d}".encode()).sk for i in range(V)]

    shortfall = 0
    selected_total = 0
    for t in range(trials):
        trial_bytes = derive_seed(seed, _STATS_STREAM + t).to_bytes(8, "big")
        count = 0
        for sk in keys:
            if provider.eval(sk, trial_bytes) <= threshold:
                count += 1
        selected_total += count
        if count < k:
            shortfall += 1

    observed = shortfall / trials
    bound = chernoff_lower_tail(k, eta)
    stderr = math.sqrt(bound * (1.0 - bound) / trials)
    limit = bound + 3.0 * stderr
    return {
        "k": k,
        "eta": eta,
        "V": V,
        "n": n,
        "k_prime": float(k_prime),
        "threshold": int(threshold),
        "trials": trials,
        "observed_shortfall": shortfall,
        "observed_rate": observed,
        "bound": bound,
        "stderr": stderr,
        "limit": limit,
        "within_bound": observed <= limit,
        "mean_selected": selected_total / trials,
    }


def stats_from_scenario(scenario: Scenario, *, seed: int | None = None,
                        trials: int | None = None) -> dict:
    cfg = scenario.config()
    return selection_stats(
        k=cfg.m, eta=cfg.eta, V=cfg.V, n=cfg.n,
        trials=scenario.trials if trials is None else trials,
        seed=scenario.seed if seed is None else seed,
    )


def complexity_sweep(scenario: Scenario, *, seed: int | None = None,
                     trials: int | None = None,
                     step_budget: int | None = None,
                     workers: int = 1) -> tuple[list[dict], dict]:
    """Measure per-operation message counts across the configured n sweep.

    Returns per-n mean counts and doubling-ratio checks: settle counts
    should scale ~n^2 (ratio 4 per doubling), redeem ~n (ratio 2), pay
    should not move at fixed V.  All ratios get a 15% tolerance.
    """
    from .report import _group_counts

    sweep = scenario.sweep_n or (scenario.params["n"],)
    base_seed = scenario.seed if seed is None else seed
    rows = []
    for n in sweep:
        variant = Scenario(
            path=scenario.path,
            params={**scenario.params, "n": n},
            genesis=scenario.genesis,
            phases=scenario.phases,
            policy_name=scenario.policy_name,
            policy_params=scenario.policy_params,
            trials=scenario.trials if trials is None else trials,
            seed=derive_seed(base_seed, n),
        )
        results = run_trials(variant, step_budget=step_budget, workers=workers)
        groups = [_group_counts(r.metrics) for r in results]
        rows.append({
            "n": n,
            "trials": len(results),
            "mean_pay": sum(g["pay"] for g in groups) / len(results),
            "mean_settle": sum(g["settle"] for g in groups) / len(results),
            "mean_redeem": sum(g["redeem"] for g in groups) / len(results),
        })

    checks: dict[str, object] = {}
    ok = True
    for prev, cur in zip(rows, rows[1:]):
        if cur["n"] != 2 * prev["n"]:
            continue
        label = f"{prev['n']}_{cur['n']}"
        settle_ratio = cur["mean_settle"] / prev["mean_settle"]
        redeem_ratio = cur["mean_redeem"] / prev["mean_redeem"]
        pay_ratio = cur["mean_pay"] / prev["mean_pay"]
        checks[f"settle_ratio_{label}"] = settle_ratio
        checks[f"redeem_ratio_{label}"] = redeem_ratio
        checks[f"pay_ratio_{label}"] = pay_ratio
        ok = ok and abs(settle_ratio - 4.0) <= 0.6
        ok = ok and abs(redeem_ratio - 2.0) <= 0.3
        ok = ok and abs(pay_ratio - 1.0) <= 0.15
    checks["within_tolerance"] = ok
    return rows, checks
