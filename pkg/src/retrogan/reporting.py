"""Render training logs and harness grids to figures and delimited files.

Every report path gets both machine-readable TSV output and a rendered PNG
next to it, so a finished run directory is self-describing.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ParseError
from .trainer import LOG_LOSS_FIELDS


def parse_train_log(path):
    """Read a trainer log file back into (steps, series, evals).

    ``series`` maps each loss field name to a list of floats aligned with
    ``steps``; ``evals`` is a list of (step, metric, value).
    """
    steps = []
    series = {name: [] for name in LOG_LOSS_FIELDS}
    evals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "loss":
                if len(parts) != 2 + len(LOG_LOSS_FIELDS):
                    raise ParseError(
                        f"loss record has {len(parts)} fields", line_number=lineno
                    )
                steps.append(int(parts[1]))
                for name, value in zip(LOG_LOSS_FIELDS, parts[2:]):
                    series[name].append(float(value))
            elif parts[0] == "eval":
                if len(parts) != 4:
                    raise ParseError(
                        f"eval record has {len(parts)} fields", line_number=lineno
                    )
                evals.append((int(parts[1]), parts[2], float(parts[3])))
            else:
                raise ParseError(f"unknown record type {parts[0]!r}", line_number=lineno)
    return steps, series, evals


def moving_average(values, window):
    """Boxcar smoothing; shorter-than-window prefixes average what exists."""
    values = np.asarray(values, dtype=np.float64)
    if window <= 1 or len(values) == 0:
        return values
    out = np.empty_like(values)
    csum = np.cumsum(values)
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        total = csum[i] - (csum[lo - 1] if lo > 0 else 0.0)
        out[i] = total / (i - lo + 1)
    return out


def plot_loss_curves(steps, series, out_path, fields=None, smooth=1, title="training losses"):
    fields = list(fields) if fields else [f for f in LOG_LOSS_FIELDS if f != "total"] + ["total"]
    fig, ax = plt.subplots(figsize=(9, 5))
    for name in fields:
        ys = series[name]
        if not ys:
            continue
        ax.plot(steps, moving_average(ys, smooth), label=name, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_eval_curves(evals, out_path, title="evaluation snapshots"):
    by_metric = {}
    for step, name, value in evals:
        by_metric.setdefault(name, []).append((step, value))
    fig, ax = plt.subplots(figsize=(8, 5))
    for name in sorted(by_metric):
        pts = sorted(by_metric[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("metric")
    ax.set_title(title)
    if by_metric:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_eval_reports(reports, path):
    """One TSV line per EvalReport, with a header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(reports[0].HEADER + "\n" if reports else "")
        for rep in reports:
            fh.write(rep.to_line() + "\n")


def write_ook_grid(grid, path):
    """Flatten {fraction: {dataset: EvalReport}} to TSV rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fraction\t" + "dataset\tmode\trho\tevaluated\tskipped" + "\n")
        for fraction in sorted(grid):
            for name in sorted(grid[fraction]):
                fh.write(f"{fraction:g}\t" + grid[fraction][name].to_line() + "\n")


def plot_ook_grid(grid, out_path, title="constraint coverage vs benchmark rho"):
    fractions = sorted(grid)
    names = sorted({name for f in fractions for name in grid[f]})
    fig, ax = plt.subplots(figsize=(7, 5))
    for name in names:
        ys = [grid[f][name].rho for f in fractions]
        ax.plot(fractions, ys, marker="o", label=name)
    ax.set_xlabel("fraction of benchmark words covered by constraints")
    ax.set_ylabel("spearman rho")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_ablation_table(results, path, fieldname="total"):
    """Final smoothed value of one loss field per ablation variant, as TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant\tsteps\tfinal_" + fieldname + "\n")
        for label in results:
            log = results[label].log
            ys = log.series(fieldname)
            tail = float(np.mean(ys[-10:])) if ys else float("nan")
            fh.write(f"{label}\t{len(ys)}\t{tail:.6f}\n")


def plot_ablation(results, out_path, fieldname="cyc", smooth=25,
                  title="ablation loss curves"):
    """One smoothed curve of a chosen loss field per ablation variant."""
    fig, ax = plt.subplots(figsize=(9, 5))
    for label in results:
        log = results[label].log
        ys = log.series(fieldname)
        if not ys:
            continue
        ax.plot(log.steps, moving_average(ys, smooth), label=label, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel(fieldname)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
