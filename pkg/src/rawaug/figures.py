"""PNG figures for reports, written next to the CSV/JSON they are drawn from.

Uses the non-interactive Agg backend and strips the software tag from PNG
metadata so identical data produce identical files.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MAX_POINTS = 4000
_META = {"Software": None}


def _thin(pairs: np.ndarray, limit: int = MAX_POINTS) -> np.ndarray:
    step = max(1, len(pairs) // limit)
    return pairs[::step]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _line(ax, fit, x, **kw):
    xs = np.array([x.min(), x.max()])
    ax.plot(xs, fit.slope * xs + fit.intercept, **kw)


def alignment_figure(report, path: str | os.PathLike) -> Path:
    """Mean-variance scatter of real and converted pixels with both fitted lines."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    real, conv = _thin(report.real_pairs), _thin(report.converted_pairs)
    ax.scatter(real[:, 0], real[:, 1], s=2, alpha=0.3, color="tab:blue", label="real")
    ax.scatter(conv[:, 0], conv[:, 1], s=2, alpha=0.3, color="tab:orange", label="converted")
    allx = np.concatenate([real[:, 0], conv[:, 0]])
    _line(ax, report.real_line, allx, color="navy", lw=1.5)
    _line(ax, report.converted_line, allx, color="darkred", lw=1.5, ls="--")
    ax.set_xlabel("temporal mean (DN)")
    ax.set_ylabel("temporal variance (DN²)")
    ax.set_title(f"{report.method}: {report.conversion}")
    ax.legend(loc="upper left", markerscale=4)
    fig.tight_layout()
    return _save(fig, path)


def normality_figure(sweep, path: str | os.PathLike, alpha: float = 0.05) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = ~np.isnan(sweep.pvalue)
    pts = _thin(np.column_stack([sweep.mean[ok], sweep.pvalue[ok]]))
    ax.scatter(pts[:, 0], pts[:, 1], s=2, alpha=0.4)
    ax.axhline(alpha, color="red", lw=1)
    ax.set_xlabel("temporal mean (DN)")
    ax.set_ylabel("Shapiro-Wilk p-value")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    return _save(fig, path)


def calibration_figure(report, pairs_by_gain: dict, path: str | os.PathLike) -> Path:
    """Per-gain pairs with their fitted lines; inliers darker than outliers."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, line in enumerate(report.per_gain):
        pairs = pairs_by_gain[line.gain_db]
        mask = line.fit.inlier_mask
        color = f"C{i}"
        inl, out = _thin(pairs[mask]), _thin(pairs[~mask], 1000)
        ax.scatter(out[:, 0], out[:, 1], s=1, alpha=0.15, color="gray")
        ax.scatter(inl[:, 0], inl[:, 1], s=1, alpha=0.3, color=color,
                   label=f"{line.gain_db:g} dB")
        _line(ax, line.fit, pairs[:, 0], color=color, lw=1.2)
    ax.set_xlabel("temporal mean (DN)")
    ax.set_ylabel("temporal variance (DN²)")
    ax.legend(loc="upper left", markerscale=6)
    fig.tight_layout()
    return _save(fig, path)
