"""PNG figures for reports. Uses the non-interactive Agg backend."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def correlation_figure(corr, path, class_id=None):
    """Heatmap of a channel-correlation matrix on a fixed [-1, 1] colour scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(corr, cmap="RdBu_r", vmin=-1.0, vmax=1.0, interpolation="nearest")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="Pearson r")
        ax.set_xlabel("channel")
        ax.set_ylabel("channel")
        if class_id is not None:
            ax.set_title(f"class {class_id}")
        return _save(fig, path)


def ablation_figure(result, path):
    """Training curves (bits per column) of the hyperprior and factorized variants."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.0))
        for label, curve in (("hyperprior", result.hyperprior_curve), ("factorized", result.factorized_curve)):
            ax.plot(np.arange(len(curve)), curve, lw=1.0, label=label)
        ax.set_xlabel("step")
        ax.set_ylabel("train bits / column")
        ax.legend(frameon=False)
        return _save(fig, path)


def training_figure(history, path):
    """Per-epoch bits and distortion of a training run."""
    epochs = [row["epoch"] for row in history]
    with plt.rc_context(STYLE):
        fig, left = plt.subplots(figsize=(4.8, 3.0))
        left.plot(epochs, [row["bits"] for row in history], color="C0", lw=1.2)
        left.set_xlabel("epoch")
        left.set_ylabel("bits", color="C0")
        right = left.twinx()
        right.plot(epochs, [row["distortion"] for row in history], color="C1", lw=1.2)
        right.set_ylabel("MSE", color="C1")
        return _save(fig, path)
