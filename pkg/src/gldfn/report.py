"""Report serialization: delimited table, key-value file, and figures.

Every report written to disk comes in three forms next to each other:
a tab-separated table (one row per image, aggregate last), a flat
key-value file, and rendered PNG charts.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _fmt_psnr(value):
    return "inf" if math.isinf(value) else f"{value:.4f}"


def write_report_table(report, path):
    """Tab-separated rows: name, psnr, ssim; aggregate row last."""
    with open(path, "w") as fh:
        fh.write("name\tpsnr_db\tssim\n")
        for rec in report.records:
            fh.write(f"{rec.name}\t{_fmt_psnr(rec.psnr)}\t{rec.ssim:.6f}\n")
        fh.write(f"aggregate\t{_fmt_psnr(report.mean_psnr)}\t{report.mean_ssim:.6f}\n")


def write_report_keyvalues(report, path):
    with open(path, "w") as fh:
        fh.write(f"report.setting = {report.setting}\n")
        fh.write(f"report.scale = {report.scale}\n")
        fh.write(f"report.images = {len(report.records)}\n")
        for rec in report.records:
            fh.write(f"image.{rec.name}.psnr = {_fmt_psnr(rec.psnr)}\n")
            fh.write(f"image.{rec.name}.ssim = {rec.ssim:.6f}\n")
        fh.write(f"aggregate.psnr = {_fmt_psnr(report.mean_psnr)}\n")
        fh.write(f"aggregate.ssim = {report.mean_ssim:.6f}\n")


def render_report_figure(report, path):
    """Per-image PSNR/SSIM bars with the aggregate mean drawn across."""
    names = [r.name for r in report.records]
    psnrs = [r.psnr if math.isfinite(r.psnr) else 0.0 for r in report.records]
    ssims = [r.ssim for r in report.records]
    xs = range(len(names))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(6, 0.5 * len(names)), 6), sharex=True)
    ax1.bar(xs, psnrs, color="#4878a8")
    ax1.axhline(report.mean_psnr, color="#a84848", lw=1, label=f"mean {report.mean_psnr:.2f} dB")
    ax1.set_ylabel("PSNR (dB)")
    ax1.legend(loc="lower right", fontsize=8)
    ax2.bar(xs, ssims, color="#6aa84f")
    ax2.axhline(report.mean_ssim, color="#a84848", lw=1, label=f"mean {report.mean_ssim:.4f}")
    ax2.set_ylabel("SSIM")
    ax2.set_xticks(list(xs))
    ax2.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    fig.suptitle(f"{report.setting} x{report.scale}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report, base_path):
    """Write table, key-value file and figure; returns the paths."""
    root, ext = os.path.splitext(base_path)
    table = base_path if ext else root + ".tsv"
    paths = {
        "table": table,
        "keyvalues": root + ".kv",
        "figure": root + ".png",
    }
    write_report_table(report, paths["table"])
    write_report_keyvalues(report, paths["keyvalues"])
    render_report_figure(report, paths["figure"])
    return paths


def render_loss_curve(log, path):
    """Loss-vs-iteration chart with a 100-entry moving average."""
    iters = [e["iter"] for e in log]
    losses = [e["loss"] for e in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iters, losses, lw=0.7, alpha=0.5, label="loss")
    if len(losses) >= 5:
        k = min(100, max(2, len(losses) // 5))
        smooth = [sum(losses[max(0, i - k + 1) : i + 1]) / len(losses[max(0, i - k + 1) : i + 1])
                  for i in range(len(losses))]
        ax.plot(iters, smooth, lw=1.5, label=f"moving avg ({k})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
