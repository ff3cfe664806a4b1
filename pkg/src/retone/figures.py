"""Matplotlib rendering for report outputs.

Every report path (evaluation tables, histograms, training curves) can
save a figure next to its text/CSV form. Rendering is headless (Agg).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from retone.image_io import Histogram


def save_histogram_figure(hists: dict[str, Histogram], path, title: str = "Intensity histogram") -> None:
    """Overlay per-image intensity histograms, one panel per labeled image."""
    n = len(hists)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.2), squeeze=False)
    for ax, (label, hist) in zip(axes[0], hists.items()):
        if hist.per_channel:
            for c in range(hist.bins.shape[0]):
                ax.fill_between(np.arange(256), hist.bins[c], step="mid", alpha=0.45, label=f"ch{c}")
            ax.legend(fontsize=8)
        else:
            ax.fill_between(np.arange(256), hist.bins, step="mid", color="0.3")
        ax.set_xlim(0, 255)
        ax.set_xlabel("intensity")
        ax.set_ylabel("count")
        ax.set_title(label, fontsize=10)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_eval_figure(report, path) -> None:
    """Per-image PSNR bars, degraded vs restored, with SSIM means in the title."""
    rows = report.rows
    idx = np.arange(len(rows))
    width = 0.42
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(rows) + 2), 3.6))
    ax.bar(idx - width / 2, [r.psnr_degraded for r in rows], width, label=report.degraded_label())
    ax.bar(idx + width / 2, [r.psnr_restored for r in rows], width, label=report.restored_label())
    ax.set_xticks(idx)
    ax.set_xticklabels([r.name for r in rows], rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("PSNR (dB)")
    m = report.mean()
    ax.set_title(
        f"{report.spec}  mean PSNR {m.psnr_degraded:.2f} -> {m.psnr_restored:.2f} dB, "
        f"SSIM {m.ssim_degraded:.3f} -> {m.ssim_restored:.3f}",
        fontsize=10,
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_study_figure(report, path) -> None:
    """Restored quality per loss tap against the shared degraded baseline."""
    taps = [r.tap for r in report.rows]
    idx = np.arange(len(taps))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax1.bar(idx, [r.psnr_restored for r in report.rows], 0.6, color="#3572b0")
    ax1.axhline(report.rows[0].psnr_degraded, color="0.4", ls="--", label="degraded")
    ax1.set_xticks(idx)
    ax1.set_xticklabels(taps)
    ax1.set_ylabel("restored PSNR (dB)")
    ax1.legend(fontsize=8)
    ax2.bar(idx, [r.ssim_restored for r in report.rows], 0.6, color="#3572b0")
    ax2.axhline(report.rows[0].ssim_degraded, color="0.4", ls="--", label="degraded")
    ax2.set_xticks(idx)
    ax2.set_xticklabels(taps)
    ax2.set_ylabel("restored SSIM")
    ax2.legend(fontsize=8)
    fig.suptitle(f"loss-layer comparison on {report.spec}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_loss_figure(history, path) -> None:
    """Training loss curve on a log scale."""
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.plot(np.arange(1, len(history) + 1), history, lw=0.9)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
