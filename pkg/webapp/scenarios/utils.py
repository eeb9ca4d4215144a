import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TEXT_COLOR = "#ffffff"
SUBTLE_GRAY = "#b3b3b3"
LINBFT_COLOR = "#4e79a7"
BASELINE_COLOR = "#f28e2b"


def get_separation_chart(frame, title="Transmission volume per height", slope=None, baseline_slope=None):
    """
    Draws the measured LinBFT volume next to the all-to-all baseline on
    log-log axes and returns the chart as PNG bytes.

    ``frame`` is ComplexityReport.frame(): one row per n with the columns
    ``linbft_per_height``, ``closed_form`` and ``pbft_baseline``.
    """
    if frame.empty:
        raise ValueError("nothing to plot: the sweep frame is empty")

    # 1. Setup Theme
    plt.style.use("dark_background")
    plt.rcParams["font.family"] = "sans-serif"
    plt.rcParams["font.sans-serif"] = ["Inter", "Arial", "Helvetica", "DejaVu Sans"]

    fig, ax = plt.subplots(figsize=(10, 6))
    fig.patch.set_facecolor("none")
    ax.set_facecolor("none")

    n = frame["n"].to_numpy(dtype=float)
    linbft = frame["linbft_per_height"].to_numpy(dtype=float)
    baseline = frame["pbft_baseline"].to_numpy(dtype=float)

    # 2. Measured curves
    linbft_label = "LinBFT (measured)" if slope is None else f"LinBFT (measured, slope {slope:.2f})"
    baseline_label = "PBFT baseline" if baseline_slope is None else f"PBFT baseline (slope {baseline_slope:.2f})"
    ax.loglog(n, linbft, marker="o", linewidth=2.5, color=LINBFT_COLOR, label=linbft_label)
    ax.loglog(n, baseline, marker="s", linewidth=2.5, color=BASELINE_COLOR, label=baseline_label)

    # 3. Closed form 5(n-1), dashed under the measured LinBFT points
    grid = np.geomspace(n.min(), n.max(), 100)
    ax.loglog(grid, 5 * (grid - 1), linestyle="--", linewidth=1, color=SUBTLE_GRAY, label="5(n-1)")

    for x, v in zip(n, linbft):
        ax.annotate(f"{v:g}", (x, v), textcoords="offset points", xytext=(0, -16),
                    ha="center", color=LINBFT_COLOR, fontsize=9, fontweight="bold")

    # 4. Axis Styling
    ax.set_xticks(n)
    ax.set_xticklabels([str(int(x)) for x in n], color=TEXT_COLOR)
    ax.minorticks_off()
    ax.set_xlabel("participants n", color=SUBTLE_GRAY, labelpad=10)
    ax.set_ylabel("units per height", color=SUBTLE_GRAY, labelpad=10)

    # 5. Global Cleanup
    ax.grid(which="major", linestyle="--", alpha=0.1)
    for spine in ax.spines.values():
        spine.set_visible(False)
    ax.tick_params(length=0, pad=8, colors=SUBTLE_GRAY)
    legend = ax.legend(frameon=False, loc="upper left")
    for text in legend.get_texts():
        text.set_color(TEXT_COLOR)

    ax.set_title(title, fontsize=14, fontweight="bold", color=TEXT_COLOR, pad=20, loc="left")

    plt.tight_layout()

    # Output
    buffer = io.BytesIO()
    plt.savefig(buffer, format="png", transparent=True, dpi=150, bbox_inches="tight")
    img_data = buffer.getvalue()
    buffer.close()
    plt.close(fig)

    return img_data
