"""Static report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (7.0, 2.8),
    "savefig.dpi": 120,
}


def horizon_curves(runs, path, step_minutes=5):
    """Per-horizon MAE and RMSE, one line per run. ``runs`` maps label -> (mae, rmse)."""
    with plt.rc_context(STYLE):
        fig, (ax_mae, ax_rmse) = plt.subplots(1, 2)
        for label, (mae, rmse) in runs.items():
            minutes = [step_minutes * (h + 1) for h in range(len(mae))]
            ax_mae.plot(minutes, mae, marker="o", ms=3, label=label)
            ax_rmse.plot(minutes, rmse, marker="o", ms=3, label=label)
        for ax, name in ((ax_mae, "MAE"), (ax_rmse, "RMSE")):
            ax.set_xlabel("forecast interval (min)")
            ax.set_ylabel(name)
        ax_mae.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def training_curve(history, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [r["epoch"] for r in history]
        ax.plot(epochs, [r["train_loss"] for r in history], label="train loss (normalized MAE)")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train loss")
        ax2 = ax.twinx()
        ax2.plot(epochs, [r["val_mae"] for r in history], color="C1", label="validation MAE")
        ax2.set_ylabel("validation MAE")
        fig.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
