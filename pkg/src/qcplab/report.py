"""Report files: deterministic JSON emission plus the figure/CSV renderer.

Game, demo, and verify runs write machine-readable JSON only. The `report`
subcommand consumes such a file and renders matplotlib figures next to a
delimited summary, acting as the plotting consumer of the JSON reports.
"""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone

from . import __version__


def build_manifest(subcommand: str, config: dict, seed: int, stamp: bool = False) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
        # wall-clock stamping is opt-in: reports must be byte-identical
        # across reruns of the same configuration
        "timestamp": datetime.now(timezone.utc).isoformat() if stamp else None,
    }


def emit_report(path: str, manifest: dict, results: dict) -> None:
    payload = {"manifest": manifest, "results": results}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def load_report(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read report from {path}: {exc}") from exc


def render_report(path: str, out_dir: str | None = None) -> list[str]:
    """Render figures and a CSV summary for a report file; returns written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rep = load_report(path)
    manifest = rep.get("manifest", {})
    results = rep.get("results", {})
    sub = manifest.get("subcommand", "unknown")
    base = os.path.splitext(os.path.basename(path))[0]
    out_dir = out_dir or os.path.join(os.path.dirname(os.path.abspath(path)), base + "_report")
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def save_fig(fig, name):
        p = os.path.join(out_dir, name)
        fig.savefig(p, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(p)

    def save_csv(rows, header, name="summary.csv"):
        p = os.path.join(out_dir, name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(p)

    diag = results.get("diagnostics", {}) or {}
    if sub == "demo-cp" and "per_call_success" in diag:
        calls = diag["per_call_success"]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(range(1, len(calls) + 1), calls, marker="o", lw=1.2)
        if "fixed_point" in diag:
            ax.axhline(diag["fixed_point"], color="firebrick", ls="--",
                       label=f"fixed point {diag['fixed_point']:.4f}")
            ax.legend()
        ax.set_xlabel("evaluation")
        ax.set_ylabel("success probability")
        ax.set_title(f"reusability, lambda={diag.get('lambda')}")
        save_fig(fig, "per_call_success.png")
        save_csv(
            [(i + 1, p) for i, p in enumerate(calls)],
            ["call", "success_probability"],
        )
    elif sub == "verify":
        criteria = diag.get("criteria", [])
        names = [c["name"] for c in criteria]
        passed = [1 if c["passed"] else 0 for c in criteria]
        fig, ax = plt.subplots(figsize=(6, 0.35 * max(len(names), 4) + 1))
        colors = ["seagreen" if p else "firebrick" for p in passed]
        ax.barh(range(len(names)), [1] * len(names), color=colors)
        ax.set_yticks(range(len(names)), names, fontsize=8)
        ax.set_xticks([])
        ax.set_title(f"suite criteria: {sum(passed)}/{len(passed)} passed")
        ax.invert_yaxis()
        save_fig(fig, "criteria.png")
        save_csv(
            [(c["name"], c["passed"]) for c in criteria],
            ["criterion", "passed"],
        )
    else:
        rate = results.get("win_rate")
        lo, hi = (results.get("ci95") or [rate, rate])[:2]
        fig, ax = plt.subplots(figsize=(4, 3.5))
        if rate is not None:
            ax.bar([0], [rate], width=0.5, color="steelblue",
                   yerr=[[rate - lo], [hi - rate]], capsize=6)
        expected = results.get("derived_expectation")
        if expected is not None:
            ax.axhline(expected, color="firebrick", ls="--",
                       label=f"expected {expected:.4g}")
            ax.legend()
        ax.set_xticks([0], [manifest.get("config", {}).get("adversary", sub)])
        ax.set_ylabel("win rate")
        ax.set_title(sub)
        save_fig(fig, "win_rate.png")
        save_csv(
            [(sub, results.get("wins"), results.get("trials"), rate, lo, hi, expected)],
            ["run", "wins", "trials", "win_rate", "ci95_lo", "ci95_hi", "derived_expectation"],
        )
    return written
