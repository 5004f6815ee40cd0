"""Figure rendering for the report path.

Figures are written next to the report file and are purely additive: the
text report bytes never depend on whether figures were rendered, so
reproducibility checks stay on the text alone.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _sibling(report_path: str, suffix: str) -> str:
    stem, _ext = os.path.splitext(report_path)
    return f"{stem}_{suffix}.png"


def render_run_figures(report_path: str, cfg, results) -> list[str]:
    paths = []

    counts = sorted(
        c for r in results for c in r.metrics.selection_counts.values()
    )
    if counts:
        fig, ax = plt.subplots(figsize=(6, 4))
        bins = range(min(counts), max(counts) + 2)
        ax.hist(counts, bins=bins, align="left", color="#4878a8", edgecolor="black")
        ax.axvline(cfg.m, color="#a84848", linestyle="--", label=f"target m={cfg.m}")
        ax.axvline(cfg.q, color="#48a868", linestyle=":", label=f"quorum q={cfg.q}")
        ax.set_xlabel("validators signing per transaction")
        ax.set_ylabel("transactions")
        ax.legend()
        fig.tight_layout()
        path = _sibling(report_path, "selection")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)

    depths = sorted(
        p["seller"] for r in results for p in r.metrics.pay_paths.values()
        if "seller" in p
    )
    if depths:
        fig, ax = plt.subplots(figsize=(6, 4))
        bins = range(min(depths), max(depths) + 2)
        ax.hist(depths, bins=bins, align="left", color="#4878a8", edgecolor="black")
        ax.set_xlabel("seller critical-path depth (hops)")
        ax.set_ylabel("payments")
        fig.tight_layout()
        path = _sibling(report_path, "depths")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)

    kinds = sorted({k for r in results for k in r.metrics.messages_by_kind})
    if kinds:
        totals = [
            sum(r.metrics.messages_by_kind.get(k, 0) for r in results) for k in kinds
        ]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(kinds, totals, color="#4878a8", edgecolor="black")
        ax.set_ylabel("messages delivered (all trials)")
        ax.set_yscale("log")
        ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        path = _sibling(report_path, "messages")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)

    return paths


def render_stats_figure(report_path: str, stats: dict) -> list[str]:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["observed", "bound", "bound + 3 s.e."]
    values = [stats["observed_rate"], stats["bound"], stats["limit"]]
    ax.bar(labels, values, color=["#4878a8", "#a88448", "#a84848"], edgecolor="black")
    ax.set_ylabel(f"P(fewer than {stats['k']} selected)")
    fig.tight_layout()
    path = _sibling(report_path, "shortfall")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def render_complexity_figure(report_path: str, rows: list[dict]) -> list[str]:
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = [row["n"] for row in rows]
    for key, marker in (("mean_pay", "o"), ("mean_settle", "s"), ("mean_redeem", "^")):
        ax.plot(ns, [row[key] for row in rows], marker=marker,
                label=key.removeprefix("mean_"))
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("validators n")
    ax.set_ylabel("mean messages per run")
    ax.legend()
    fig.tight_layout()
    path = _sibling(report_path, "scaling")
    fig.savefig(path)
    plt.close(fig)
    return [path]
