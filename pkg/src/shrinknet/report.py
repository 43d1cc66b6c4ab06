"""Report serialization: CSV tables, summary.txt, and minimal SVG plots."""

from __future__ import annotations

import os

import numpy as np

from .training import EvalReport, TrainState


def write_history_csv(path, history: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,train_loss,val_loss,lr\n")
        for row in history:
            f.write(f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r},{row['lr']!r}\n")


def read_history_csv(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        next(f)
        for line in f:
            e, tl, vl, lr = line.strip().split(",")
            rows.append({"epoch": int(e), "train_loss": float(tl),
                         "val_loss": float(vl), "lr": float(lr)})
    return rows


def write_accuracy_csv(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("snr_db,accuracy,n\n")
        for s in report.snr_levels:
            f.write(f"{s},{report.accuracy_by_snr[s]!r},{report.counts_by_snr[s]}\n")


def write_confusion_csv(path, matrix: np.ndarray, classes=None) -> None:
    c = matrix.shape[0]
    names = classes if classes else [f"class{i}" for i in range(c)]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("truth\\pred," + ",".join(names) + "\n")
        for i in range(c):
            f.write(names[i] + "," + ",".join(str(int(v)) for v in matrix[i]) + "\n")


def write_summary(path, report: EvalReport, extra: dict | None = None) -> None:
    lines = {
        "param_count": report.param_count,
        "flops": report.flop_count,
        "average_accuracy": f"{report.average_accuracy:.6f}",
        "max_accuracy": f"{report.max_accuracy:.6f}",
    }
    if report.inference_ms_per_sample is not None:
        lines["inference_ms_per_sample"] = f"{report.inference_ms_per_sample:.4f}"
    if extra:
        lines.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in lines.items():
            f.write(f"{k}: {v}\n")


def svg_line_plot(path, series: dict[str, tuple[list, list]], title: str,
                  xlabel: str, ylabel: str, width: int = 640, height: int = 400) -> None:
    """Tiny dependency-free SVG polyline plot (one polyline per series)."""
    pad = 50
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    if not xs_all:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2})">{ylabel}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-size="10">{x1:g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{y0:g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{y1:g}</text>',
    ]
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        color = colors[k % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * (k + 1)}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts))


def emit_report(report: EvalReport, out_dir, history: list[dict] | None = None,
                plots: bool = True) -> None:
    """Write accuracy_by_snr.csv, confusion_<snr>.csv, history.csv,
    summary.txt and (optionally) SVG plots into `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    write_accuracy_csv(os.path.join(out_dir, "accuracy_by_snr.csv"), report)
    for s in report.snr_levels:
        write_confusion_csv(os.path.join(out_dir, f"confusion_{s}.csv"),
                            report.confusion_by_snr[s], report.classes)
    if history is not None:
        write_history_csv(os.path.join(out_dir, "history.csv"), history)
    write_summary(os.path.join(out_dir, "summary.txt"), report)
    if plots:
        snrs = report.snr_levels
        svg_line_plot(os.path.join(out_dir, "accuracy_by_snr.svg"),
                      {"accuracy": (snrs, [report.accuracy_by_snr[s] for s in snrs])},
                      "Accuracy vs SNR", "SNR (dB)", "accuracy")
        if history:
            epochs = [r["epoch"] for r in history]
            svg_line_plot(os.path.join(out_dir, "loss.svg"),
                          {"train": (epochs, [r["train_loss"] for r in history]),
                           "val": (epochs, [r["val_loss"] for r in history])},
                          "Training and validation loss", "epoch", "loss")
