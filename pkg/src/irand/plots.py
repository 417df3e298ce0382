"""Figure rendering for benchmark surfaces and estimator reports.

Figures are written as PNG files next to the delimited/JSON outputs. The
Agg backend is forced so rendering works headless, and savefig metadata is
pinned so repeated runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": "irand"}}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def _surface_matrix(surface, estimator: str) -> np.ndarray:
    matrix = np.empty((len(surface.grid_sigma), len(surface.grid_n)))
    for i, sigma in enumerate(surface.grid_sigma):
        for j, n in enumerate(surface.grid_n):
            matrix[i, j] = surface.cell(n, sigma, estimator).mse
    return matrix


def _heatmap(ax, matrix: np.ndarray, surface, title: str, cmap: str = "viridis") -> None:
    image = ax.imshow(matrix, origin="lower", aspect="auto", cmap=cmap)
    ax.set_xticks(range(len(surface.grid_n)), [str(n) for n in surface.grid_n])
    ax.set_yticks(range(len(surface.grid_sigma)), [f"{s:g}" for s in surface.grid_sigma])
    ax.set_xlabel("sample size n")
    ax.set_ylabel("noise level sigma")
    ax.set_title(title)
    ax.figure.colorbar(image, ax=ax, shrink=0.85)


def save_mse_figures(surface, directory: str | Path, stem: str = "bench") -> list[Path]:
    """One MSE heatmap per estimator plus difference maps against the first.

    Returns the written paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for estimator in surface.estimators:
        fig, ax = plt.subplots(figsize=(5.2, 4.2), layout="constrained")
        _heatmap(ax, _surface_matrix(surface, estimator), surface, f"MSE: {estimator}")
        paths.append(_save(fig, directory / f"{stem}_mse_{estimator}.png"))
    baseline = surface.estimators[0]
    base_matrix = _surface_matrix(surface, baseline)
    for estimator in surface.estimators[1:]:
        fig, ax = plt.subplots(figsize=(5.2, 4.2), layout="constrained")
        _heatmap(
            ax,
            _surface_matrix(surface, estimator) - base_matrix,
            surface,
            f"MSE({estimator}) - MSE({baseline})",
            cmap="coolwarm",
        )
        paths.append(_save(fig, directory / f"{stem}_mse_{estimator}_minus_{baseline}.png"))
    return paths


def save_report_figures(
    ates: np.ndarray,
    p_values: np.ndarray | None,
    directory: str | Path,
    stem: str = "report",
    ates_label: str = "per-subsample ATE",
) -> list[Path]:
    """Histogram of per-subsample estimates and, when present, of p-values."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    fig, ax = plt.subplots(figsize=(5.2, 3.6), layout="constrained")
    ax.hist(np.asarray(ates, dtype=float), bins=min(30, max(5, len(ates) // 5)), color="#4878d0")
    ax.set_xlabel(ates_label)
    ax.set_ylabel("count")
    ax.set_title(f"Distribution of {ates_label}s")
    paths.append(_save(fig, directory / f"{stem}_ates.png"))
    if p_values is not None:
        fig, ax = plt.subplots(figsize=(5.2, 3.6), layout="constrained")
        ax.hist(
            np.asarray(p_values, dtype=float),
            bins=np.linspace(0.0, 1.0, 21),
            color="#ee854a",
        )
        ax.set_xlabel("per-subsample p-value")
        ax.set_ylabel("count")
        ax.set_title("Distribution of permutation p-values")
        paths.append(_save(fig, directory / f"{stem}_pvalues.png"))
    return paths
