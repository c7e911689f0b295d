"""Render sweep results as figures next to the delimited output."""

from __future__ import annotations

import math

from .harness import SweepResult

_MARKERS = ("o", "s", "^", "v", "D", "x", "+", "*")


def _axes(title: str, ylabel: str):
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    ax.set_xlabel("average receive SNR [dB]")
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.35)
    ax.set_title(title)
    return fig, ax


def render_ber_figure(result: SweepResult, path) -> None:
    cfg = result.spec.system
    title = (f"{cfg.antennas}x{cfg.users}, W={cfg.subcarriers}, "
             f"{cfg.constellation}, {result.spec.trials} realizations")
    fig, ax = _axes(title, "uncoded BER")
    chains = result.spec.chains if result.kind == "ber" else ()
    for i, chain in enumerate(chains):
        snr, ber = result.series(chain)
        ax.semilogy(snr, ber, marker=_MARKERS[i % len(_MARKERS)], label=chain)
    ax.set_ylim(top=1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    _close(fig)


def render_mse_figure(result: SweepResult, path) -> None:
    from .harness import ALL_ESTIMATORS

    cfg = result.spec.system
    title = (f"{cfg.antennas}x{cfg.users}, W={cfg.subcarriers}, "
             f"{result.spec.trials} realizations")
    fig, ax = _axes(title, "normalized channel MSE")
    for i, name in enumerate(ALL_ESTIMATORS):
        snr, mse = result.series(name)
        keep = [j for j, v in enumerate(mse) if math.isfinite(v) and v > 0]
        if keep:
            ax.semilogy(snr[keep], mse[keep],
                        marker=_MARKERS[i % len(_MARKERS)], label=name)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    _close(fig)


def render_figure(result: SweepResult, path) -> None:
    if result.kind == "ber":
        render_ber_figure(result, path)
    else:
        render_mse_figure(result, path)


def _close(fig) -> None:
    import matplotlib.pyplot as plt

    plt.close(fig)
