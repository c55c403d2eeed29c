import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from workflow.pipeline.metrics import METRIC_FIELDS
from workflow.utils.paths import get_figures_dir

_METRIC_LABELS = {
    "avg_guard_period_ms": "Average guard period [ms]",
    "channel_usage_pct": "Average channel usage [%]",
    "dl_usage_pct": "DL channel usage [%]",
    "ul_usage_pct": "UL channel usage [%]",
    "avg_capacity_mbps": "Average capacity [Mbps]",
    "dl_capacity_mbps": "Average DL capacity [Mbps]",
    "ul_capacity_mbps": "Average UL capacity [Mbps]",
}

_STRIP_COLORS = {"D": "tab:blue", "U": "tab:orange", ".": "white"}


def plot_sweep_bars(table: pd.DataFrame, metric: str, axis=None):
    df = table[table["metric"] == metric].copy()
    if df.empty:
        return None
    df["sweep_value"] = df["sweep_value"].astype(str)
    combo = f"{df['scheduler'].iloc[0].upper()}-{df['policy'].iloc[0].upper()}"

    fig, ax = plt.subplots(figsize=(6, 4))
    sns.barplot(
        data=df, x="sweep_value", y="mean", color="tab:blue", errorbar=None, ax=ax
    )
    ci = df["ci95"].to_numpy(dtype=float)
    if np.isfinite(ci).any():
        ax.errorbar(
            np.arange(len(df)),
            df["mean"].to_numpy(dtype=float),
            yerr=np.nan_to_num(ci),
            fmt="none",
            color="k",
            capsize=3,
        )
    ax.set_title(combo)
    ax.set_xlabel(axis or "")
    ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
    sns.despine(ax=ax)
    return fig


def plot_snr_ecdf(samples: dict):
    """Empirical CDF of the SNR of selected UEs, one curve per sweep value."""
    frames = [
        pd.DataFrame({"snr_db": np.asarray(snr), "point": str(value)})
        for value, snr in samples.items()
        if len(snr)
    ]
    if not frames:
        return None
    fig, ax = plt.subplots(figsize=(5, 4))
    sns.ecdfplot(data=pd.concat(frames), x="snr_db", hue="point", ax=ax)
    ax.set_xlabel("SNR of selected UEs [dB]")
    ax.set_ylabel("ECDF")
    return fig


def plot_slot_strip(trace: str, slot_duration_ms: float, n_slots: int = 64):
    """Slot allocation strip of the first `n_slots` slots of a timeline trace."""
    trace = trace[:n_slots]
    fig, ax = plt.subplots(figsize=(max(6, len(trace) / 6), 1.5))
    for k, char in enumerate(trace):
        ax.add_patch(
            plt.Rectangle(
                (k * slot_duration_ms, 0),
                slot_duration_ms,
                1,
                facecolor=_STRIP_COLORS.get(char, "white"),
                edgecolor="grey",
                linewidth=0.5,
            )
        )
    ax.set_xlim(0, len(trace) * slot_duration_ms)
    ax.set_ylim(0, 1)
    ax.set_yticks([])
    ax.set_xlabel("Time at the satellite [ms]")
    return fig


def save_figs(fig_dict, save_dir, fig_prefix, extension=".png"):
    """
    Save figures in fig_dict to save_dir with the specified prefix and extension
    Returns a dictionary of saved figure paths with the same keys as fig_dict
    """
    save_dir.mkdir(exist_ok=True, parents=True)
    saved_fig_paths = {}
    for fig_name, fig in fig_dict.items():
        if fig:
            fig_filepath = save_dir / (fig_prefix + "_" + fig_name + extension)
            saved_fig_paths[fig_name] = fig_filepath.as_posix()
            fig.tight_layout()
            fig.savefig(fig_filepath)
            plt.close(fig)

    return saved_fig_paths


def save_report_figures(table, snr_samples, out_dir, stem, axis=None, traces=None):
    """
    Bar charts of every metric over the sweep, the selected-UE SNR ECDF and,
    for each entry of `traces` ({label: (trace, slot_ms)}), a slot strip.
    """
    fig_dict = {
        metric: plot_sweep_bars(table, metric, axis) for metric in METRIC_FIELDS
    }
    fig_dict["snr_ecdf"] = plot_snr_ecdf(snr_samples)
    for label, (trace, slot_ms) in (traces or {}).items():
        fig_dict[f"slots_{label}"] = plot_slot_strip(trace, slot_ms)
    return save_figs(fig_dict, get_figures_dir(out_dir), stem)
