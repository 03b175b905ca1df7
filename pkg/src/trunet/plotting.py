"""Matplotlib report figures for the CLI (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from trunet.dsp import StftConfig, stft  # noqa: E402


def _log_power(x, cfg):
    if len(x) < cfg.window_size:
        x = np.concatenate([x, np.zeros(cfg.window_size - len(x))])
    return 20.0 * np.log10(np.abs(stft(x, cfg, full=True)).T + 1e-8)


def plot_sources(path, mixture, sources: dict, cfg: StftConfig = StftConfig()):
    """Spectrograms of the input and each separated source, stacked vertically."""
    panels = [("input", mixture)] + list(sources.items())
    fig, axes = plt.subplots(len(panels), 1, figsize=(8, 2.2 * len(panels)), sharex=True)
    axes = np.atleast_1d(axes)
    ref = _log_power(np.asarray(mixture, dtype=np.float64), cfg)
    vmax = float(ref.max())
    for ax, (name, sig) in zip(axes, panels):
        img = _log_power(np.asarray(sig, dtype=np.float64), cfg)
        t_end = img.shape[1] * cfg.hop_size / cfg.sample_rate
        ax.imshow(img, origin="lower", aspect="auto", cmap="magma", vmin=vmax - 80, vmax=vmax,
                  extent=(0, t_end, 0, cfg.sample_rate / 2000))
        ax.set_ylabel("kHz")
        ax.set_title(name, fontsize=9, loc="left")
    axes[-1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_frame_times(path, report):
    """Histogram of per-frame processing time against the hop budget."""
    times = np.asarray(report.frame_ms)
    budget = report.mean_frame_ms / report.rtf
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(times, bins=50, color="0.4")
    ax.axvline(report.mean_frame_ms, color="C0", label=f"mean {report.mean_frame_ms:.2f} ms")
    ax.axvline(report.p95_frame_ms, color="C1", ls="--", label=f"p95 {report.p95_frame_ms:.2f} ms")
    ax.axvline(budget, color="C3", label=f"hop budget {budget:.0f} ms")
    ax.set_xlabel("frame time (ms)")
    ax.set_ylabel("frames")
    ax.set_title(f"{report.mode}: RTF {report.rtf:.3f}", fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
