"""Command line front door: run scenarios, selection stats, complexity sweeps.

Exit codes: 0 all checks pass, 1 safety or statistical check failed,
2 unusable input (parse/validation), 3 liveness failure (step budget
exhausted before quiescence).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .harness import (
    EXIT_LIVENESS,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_SAFETY,
    classify,
    complexity_sweep,
    run_trials,
    stats_from_scenario,
)
from .params import ConfigError
from .report import (
    render_complexity_report,
    render_run_report,
    render_stats_report,
)
from .scenario import _PARAM_TYPES, Scenario, ScenarioError, parse_scenario
from .simnet import BUILTIN_POLICIES, DEFAULT_STEP_BUDGET


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("scenario", help="scenario file (.scn)")
    sub.add_argument("--seed", type=int, default=None, help="override base seed")
    sub.add_argument("--trials", type=int, default=None, help="override trial count")
    sub.add_argument("--out", default=None, help="report file path "
                     "(default: <scenario>_report.txt in the working directory)")
    sub.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="override a [params] value, trials, seed or policy")
    sub.add_argument("--workers", type=int, default=1,
                     help="worker threads for trials (default 1)")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip figure rendering next to the report")


def _apply_overrides(scn: Scenario, overrides: list[str]) -> None:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ScenarioError(scn.path, 0, f"override {item!r} is not KEY=VALUE")
        key = key.strip()
        value = value.strip()
        try:
            if key in _PARAM_TYPES:
                scn.params[key] = _PARAM_TYPES[key](value)
            elif key in ("trials", "seed"):
                setattr(scn, key, int(value))
            elif key == "policy":
                if value not in BUILTIN_POLICIES:
                    raise ScenarioError(scn.path, 0, f"unknown policy {value!r}")
                scn.policy_name = value
            else:
                raise ScenarioError(scn.path, 0, f"unknown override key {key!r}")
        except ValueError:
            raise ScenarioError(scn.path, 0, f"bad override value {item!r}") from None


def _load(args) -> Scenario:
    scn = parse_scenario(args.scenario)
    _apply_overrides(scn, args.override)
    try:
        scn.config()
    except ConfigError as exc:
        raise ScenarioError(scn.path, 0, f"invalid parameters: {exc}") from None
    return scn


def _out_path(args) -> str:
    if args.out:
        return args.out
    stem = os.path.splitext(os.path.basename(args.scenario))[0]
    return f"{stem}_report.txt"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _cmd_run(args) -> int:
    scn = _load(args)
    results = run_trials(scn, seed=args.seed, trials=args.trials, workers=args.workers)
    seed = scn.seed if args.seed is None else args.seed
    budget = int(os.environ.get("SIM_STEP_BUDGET", DEFAULT_STEP_BUDGET))
    text = render_run_report(
        os.path.basename(scn.path), scn.config(), results,
        seed=seed, step_budget=budget,
    )
    out = _out_path(args)
    _write(out, text)
    figure_paths = []
    if not args.no_figures:
        from .figures import render_run_figures

        figure_paths = render_run_figures(out, scn.config(), results)
    code = classify(results)
    verdict = {EXIT_OK: "PASS", EXIT_SAFETY: "SAFETY-FAIL", EXIT_LIVENESS: "LIVENESS-FAIL"}[code]
    print(f"{verdict}: {len(results)} trial(s), report {out}"
          + (f", figures {len(figure_paths)}" if figure_paths else ""))
    return code


def _cmd_stats(args) -> int:
    scn = _load(args)
    stats = stats_from_scenario(scn, seed=args.seed, trials=args.trials)
    seed = scn.seed if args.seed is None else args.seed
    text = render_stats_report(os.path.basename(scn.path), stats, seed=seed)
    out = _out_path(args)
    _write(out, text)
    if not args.no_figures:
        from .figures import render_stats_figure

        render_stats_figure(out, stats)
    ok = stats["within_bound"]
    print(f"{'PASS' if ok else 'FAIL'}: shortfall {stats['observed_rate']:.6f} "
          f"vs limit {stats['limit']:.6f}, report {out}")
    return EXIT_OK if ok else EXIT_SAFETY


def _cmd_complexity(args) -> int:
    scn = _load(args)
    rows, checks = complexity_sweep(
        scn, seed=args.seed, trials=args.trials, workers=args.workers
    )
    seed = scn.seed if args.seed is None else args.seed
    text = render_complexity_report(os.path.basename(scn.path), rows, checks, seed=seed)
    out = _out_path(args)
    _write(out, text)
    if not args.no_figures:
        from .figures import render_complexity_figure

        render_complexity_figure(out, rows)
    ok = bool(checks.get("within_tolerance"))
    print(f"{'PASS' if ok else 'FAIL'}: sweep over n={[r['n'] for r in rows]}, report {out}")
    return EXIT_OK if ok else EXIT_SAFETY


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracspend",
        description="Quorum-validated fractional spending under an "
                    "adversarial network simulator.",
    )
    parser.add_argument("--version", action="version",
                        version=f"fracspend {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    run_p = sub.add_parser("run", help="run a scenario's trials and report")
    _add_common(run_p)
    run_p.set_defaults(func=_cmd_run)
    stats_p = sub.add_parser("stats", help="selection shortfall statistics")
    _add_common(stats_p)
    stats_p.set_defaults(func=_cmd_stats)
    cplx_p = sub.add_parser("complexity", help="message-count scaling sweep")
    _add_common(cplx_p)
    cplx_p.set_defaults(func=_cmd_complexity)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
