"""Figure output for reports and sweeps (PNG files via the Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .attack import AttackReport  # noqa: E402
from .leakage import Trace  # noqa: E402

__all__ = ["plot_slot_deltas", "plot_sweep", "plot_trace_excerpt", "plot_gamma_sweep"]


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_slot_deltas(slot_delta: Sequence[float] | AttackReport, path: str | Path) -> Path:
    """Per-slot correctness, raw and inverted, with the winner marked."""
    if isinstance(slot_delta, AttackReport):
        slot_delta = [d for _, d, _ in slot_delta.slot_deltas()]
    raw = np.asarray(slot_delta, dtype=float)
    inv = 100 - raw
    slots = np.arange(len(raw))
    best = int(np.argmax(np.maximum(raw, inv)))
    best_pct = max(raw[best], inv[best])
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.bar(slots, raw, width=0.8, color="tab:blue", label="raw")
    ax.bar(slots, inv, width=0.4, color="tab:orange", alpha=0.7, label="inverted")
    ax.axhline(50, color="grey", lw=0.8, ls=":")
    ax.annotate(f"best: slot {best}, {best_pct:.1f}%",
                (best, best_pct), xytext=(0, 6),
                textcoords="offset points", ha="center", fontsize=8)
    ax.set_xlabel("clock cycle within key-bit window")
    ax.set_ylabel("correctness (%)")
    ax.set_xlim(-1, len(slots))
    ax.set_ylim(0, 105)
    ax.legend(loc="lower right", fontsize=8, frameon=False)
    return _save(fig, path)


def plot_sweep(summary: Sequence[dict], path: str | Path) -> Path:
    """DC offset and best correctness per scenario, against laser power."""
    names = [r["scenario"] for r in summary]
    power = np.array([r["power_pct"] for r in summary])
    offset = np.array([r["dc_offset"] for r in summary])
    delta = np.array([r["delta_mean"] for r in summary])
    err = np.array([r["delta_std"] for r in summary])

    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.4))
    a1.scatter(power, offset, color="k", zorder=3)
    for n, x, y in zip(names, power, offset):
        a1.annotate(n, (x, y), xytext=(4, 4), textcoords="offset points", fontsize=7)
    a1.set_xlabel("laser power (%)")
    a1.set_ylabel("DC offset (model units)")

    a2.errorbar(np.arange(len(names)), delta, yerr=err, fmt="o", color="tab:blue", capsize=3)
    a2.set_xticks(np.arange(len(names)))
    a2.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    a2.set_ylabel("best-candidate correctness (%)")
    return _save(fig, path)


def plot_gamma_sweep(points: Sequence[tuple[float, float]], path: str | Path) -> Path:
    x, y = zip(*points)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(x, y, "o-", color="tab:red")
    ax.axhline(50, color="grey", lw=0.8, ls=":")
    ax.set_xlabel(r"$\gamma\alpha$")
    ax.set_ylabel("static-only correctness (%)")
    return _save(fig, path)


def plot_trace_excerpt(trace: Trace, path: str | Path, start_cycle: int = 0, n_cycles: int = 4,
                       reference: Trace | None = None) -> Path:
    spc = trace.samples_per_cycle
    sl = slice(start_cycle * spc, (start_cycle + n_cycles) * spc)
    t_us = np.arange(sl.start, sl.stop) / trace.sample_rate * 1e6
    fig, ax = plt.subplots(figsize=(7, 3))
    if reference is not None:
        ax.plot(t_us, reference.samples[sl], lw=0.5, color="grey", label="reference")
    ax.plot(t_us, trace.samples[sl], lw=0.5, color="tab:blue", label=trace.meta.get("scenario", "trace"))
    ax.set_xlabel(r"time ($\mu$s)")
    ax.set_ylabel("power (model units)")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)
