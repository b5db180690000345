"""Report figures.  Every function writes one PNG and closes its figure."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamp or version in the file, so reruns are byte-identical
_PNG_METADATA = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)


def trace_plot(trace, path, columns=("objective",), title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    steps = trace.column("step")
    for name in columns:
        ax.plot(steps, trace.column(name), lw=1, label=name)
    ax.set_xlabel("round")
    ax.set_title(title)
    if len(columns) > 1:
        ax.legend(frameon=False)
    _save(fig, path)


def code_table_plot(patterns, codes, path) -> None:
    """Code activations per pattern as a heat map."""
    codes = np.atleast_2d(codes)
    fig, ax = plt.subplots(figsize=(4, 0.4 * len(codes) + 1.2))
    im = ax.imshow(codes, vmin=0, vmax=1, cmap="gray_r", aspect="auto")
    ax.set_yticks(range(len(codes)))
    ax.set_yticklabels([np.array2string(np.atleast_1d(p), precision=3) for p in patterns])
    ax.set_xticks(range(codes.shape[1]))
    ax.set_xlabel("code unit")
    fig.colorbar(im, ax=ax)
    _save(fig, path)


def histogram_plot(counts, path, reference=None, labels=None, title: str = "") -> None:
    counts = np.asarray(counts, dtype=float)
    x = np.arange(len(counts))
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(x, counts / max(counts.sum(), 1.0), color="0.5")
    if reference is not None:
        ax.step(x, reference, where="mid", color="k", lw=1)
    if labels is not None:
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=45)
    ax.set_ylabel("fraction")
    ax.set_title(title)
    _save(fig, path)


def scatter_plot(samples, path, centers=None, title: str = "") -> None:
    samples = np.atleast_2d(samples)
    fig, ax = plt.subplots(figsize=(4, 4))
    if samples.shape[1] == 1:
        ax.hist(samples[:, 0], bins=64, color="0.5")
        if centers is not None:
            for c in np.ravel(centers):
                ax.axvline(c, color="k", lw=0.5)
    else:
        ax.scatter(samples[:, 0], samples[:, 1], s=2, color="0.4")
        if centers is not None:
            c = np.atleast_2d(centers)
            ax.scatter(c[:, 0], c[:, 1], marker="x", color="k")
        ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def grouped_bar_plot(groups: dict[str, list[float]], path, ylabel: str = "", title: str = "") -> None:
    """One bar per (group, seed)."""
    fig, ax = plt.subplots(figsize=(6, 3))
    width = 0.8 / max(len(groups), 1)
    for k, (name, values) in enumerate(groups.items()):
        x = np.arange(len(values)) + k * width
        ax.bar(x, values, width=width, label=name)
    ax.set_xlabel("seed")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)


def trajectory_plot(points, path, saddle=None, title: str = "") -> None:
    """Iterates of a two-player game in the (a, b) plane."""
    p = np.asarray(points)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(p[:, 0], p[:, 1], lw=0.8, color="0.3")
    ax.plot(p[0, 0], p[0, 1], "o", color="k", ms=3)
    if saddle is not None:
        ax.plot(*saddle, "x", color="k")
    ax.set_xlabel("a")
    ax.set_ylabel("b")
    ax.set_title(title)
    _save(fig, path)
