"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited outputs (CSV/JSON) by the CLI.
The Agg backend is forced so runs work headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def _styled():
    return plt.rc_context(_STYLE)


def plot_training_curves(per_round, out_path, metric_name="metric"):
    """Loss and evaluation metric versus round, saved as one figure."""
    rounds = [r["round"] for r in per_round]
    losses = [r.get("mean_train_loss") for r in per_round]
    with _styled():
        fig, ax = plt.subplots()
        if any(v is not None for v in losses):
            ax.plot(rounds, [np.nan if v is None else v for v in losses],
                    color="tab:blue", label="mean train loss")
            ax.set_ylabel("train loss", color="tab:blue")
        ax.set_xlabel("round")
        eval_pts = [(r["round"], r["eval_metric"]) for r in per_round
                    if r.get("eval_metric") is not None]
        if eval_pts:
            ax2 = ax.twinx()
            xs, ys = zip(*eval_pts)
            ax2.plot(xs, ys, color="tab:orange", marker="o",
                     label=metric_name)
            ax2.set_ylabel(metric_name, color="tab:orange")
            ax2.spines.top.set_visible(False)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)


def plot_class_histograms(histograms, out_path):
    """Stacked per-client training class counts (partition-skew view)."""
    histograms = np.asarray(histograms, dtype=float)
    num_clients, num_classes = histograms.shape
    with _styled():
        fig, ax = plt.subplots()
        bottom = np.zeros(num_clients)
        x = np.arange(num_clients)
        for c in range(num_classes):
            ax.bar(x, histograms[:, c], bottom=bottom, label=f"class {c}")
            bottom += histograms[:, c]
        ax.set_xlabel("client")
        ax.set_ylabel("training samples")
        ax.set_xticks(x)
        if num_classes <= 12:
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)


def plot_sweep(rows, value_key, out_path):
    """Trial index versus validation metric for a hyperparameter sweep."""
    with _styled():
        fig, ax = plt.subplots()
        ys = [r[value_key] for r in rows]
        ax.plot(range(len(ys)), ys, marker="o")
        ax.set_xlabel("trial")
        ax.set_ylabel(value_key)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
