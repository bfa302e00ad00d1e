"""Render campaign and diagnostic outputs as matplotlib figures on disk.

Every CSV artifact the CLI writes gets a PNG sibling; rendering is headless
(Agg backend, no display needed).
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dd_core import DDFilter  # noqa: E402
from .sim_harness import CampaignResult, ccdf_points  # noqa: E402


def save_heatmap(filt: DDFilter, path, title: str) -> None:
    """|taps|^2 over the centered period window, delay on x, Doppler on y."""
    M, N = filt.grid.M, filt.grid.N
    arr = np.abs(filt.window_array()) ** 2
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    im = ax.imshow(
        arr.T,
        origin="lower",
        aspect="auto",
        extent=(-M // 2 - 0.5, M // 2 - 0.5, -N // 2 - 0.5, N // 2 - 0.5),
        cmap="viridis",
    )
    ax.set_xlabel("delay bin k")
    ax.set_ylabel("Doppler bin l")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label=r"$|h[k,l]|^2$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _modes(result: CampaignResult) -> list[str]:
    return sorted({p.mode for p in result.points})


def save_ser_curves(result: CampaignResult, path, xlabel: str, title: str) -> None:
    """SER versus the sweep variable, one line per mode, with CI error bars."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for mode in _modes(result):
        pts = sorted((p for p in result.points if p.mode == mode), key=lambda p: p.sweep_value)
        x = [p.sweep_value for p in pts]
        y = [p.ser for p in pts]
        err = [p.ci_half for p in pts]
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=mode)
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("SER")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_papr_ccdf(result: CampaignResult, path, title: str) -> None:
    """CCDF of the per-frame PAPR for each mode."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for mode, samples in sorted(result.papr.items()):
        pts = [(v, c) for v, c in ccdf_points(samples) if c > 0]
        ax.semilogy([v for v, _ in pts], [c for _, c in pts], label=mode)
    ax.set_xlabel("PAPR (dB)")
    ax.set_ylabel("CCDF")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_se_curves(result: CampaignResult, path, title: str) -> None:
    """Spectral-efficiency proxy versus nu_max for the estimated-CSI modes."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    wanted = [m for m in _modes(result) if m in ("precoded-est", "conventional")]
    for mode in wanted:
        pts = sorted((p for p in result.points if p.mode == mode), key=lambda p: p.sweep_value)
        x = [p.sweep_value for p in pts]
        y = [p.se_proxy for p in pts]
        label = "precoded (one-tap)" if mode == "precoded-est" else "conventional (joint)"
        ax.plot(x, y, marker="o", label=label)
    ax.set_xlabel(r"$\nu_{max}$ (kHz)")
    ax.set_ylabel("spectral efficiency proxy (bits/s/Hz)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def se_ratio(result: CampaignResult) -> dict[float, float]:
    """Precoded-over-conventional SE ratio per sweep value (nan when undefined)."""
    by_val: dict[float, dict[str, float]] = {}
    for p in result.points:
        by_val.setdefault(p.sweep_value, {})[p.mode] = p.se_proxy
    out = {}
    for v, d in sorted(by_val.items()):
        num = d.get("precoded-est", math.nan)
        den = d.get("conventional", math.nan)
        out[v] = num / den if den and not math.isnan(den) else math.nan
    return out
