"""Render run artifacts as figures next to the delimited outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .augmenter import AugmentationReport
from .tagger import ExperimentResult


def training_curves(history, path) -> None:
    """Loss components and dev perplexities per epoch; marks the phase switch."""
    fig, (ax_loss, ax_ppl) = plt.subplots(1, 2, figsize=(10, 4))
    epochs = [e.epoch for e in history]
    ax_loss.plot(epochs, [e.loss_noise for e in history], label="noise")
    ax_loss.plot(epochs, [e.loss_trans for e in history], label="transform")
    ax_loss.plot(epochs, [e.loss_adv for e in history], label="adversarial")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean batch loss")
    ax_loss.legend()
    ax_loss.set_title("training losses")

    ax_ppl.plot(epochs, [e.dev_ppl_denoise for e in history], label="denoise")
    detrans = [e.dev_ppl_detrans for e in history]
    if any(not math.isnan(v) for v in detrans):
        ax_ppl.plot(epochs, detrans, label="detransform")
    ax_ppl.set_xlabel("epoch")
    ax_ppl.set_ylabel("dev perplexity")
    ax_ppl.set_yscale("log")
    ax_ppl.legend()
    ax_ppl.set_title("dev perplexity")

    boundary = next((e.epoch for e in history if e.phase == 2), None)
    if boundary is not None and any(e.phase == 1 for e in history):
        for ax in (ax_loss, ax_ppl):
            ax.axvline(boundary - 0.5, color="gray", linestyle=":", linewidth=1)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def experiment_chart(result: ExperimentResult, path) -> None:
    """Bar chart of the three conditions' F1 with the gain annotated."""
    names = ["source", "source+generated", "target"]
    scores = [100.0 * r.f1 for r in (result.source, result.source_gen, result.target)]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, scores, color=["#999999", "#4477aa", "#66aa66"])
    for bar, score in zip(bars, scores):
        ax.text(bar.get_x() + bar.get_width() / 2, score, f"{score:.1f}",
                ha="center", va="bottom")
    ax.text(1, scores[1] + 4, f"gain {result.gain_points:+.2f}", ha="center",
            color="#4477aa")
    ax.set_ylabel("entity micro F1")
    ax.set_ylim(0, max(max(scores + [1.0]) * 1.2, scores[1] + 10))
    ax.set_title("tagger transfer conditions")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def filter_chart(report: AugmentationReport, path) -> None:
    """Bar chart of the post-processing filter accounting."""
    counts = report.counts()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(list(counts), list(counts.values()), color="#4477aa")
    ax.set_ylabel("sentences")
    ax.set_title("generation filter counts")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def similarity_chart(reports: dict, path) -> None:
    """Bar chart of mention overlap percentages, one bar per labeled pair."""
    names = list(reports)
    values = [reports[n].similarity_pct for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, values, color="#aa7744")
    for i, value in enumerate(values):
        ax.text(i, value, f"{value:.2f}%", ha="center", va="bottom")
    ax.set_ylabel("train mentions seen in test (%)")
    ax.set_title("domain similarity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
