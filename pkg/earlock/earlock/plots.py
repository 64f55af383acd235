# -*- coding: utf-8 -*-
"""SVG rendering of CMC and ROC curves."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (4.5, 3.5)

# repeated runs write byte-identical SVG
plt.rcParams["svg.hashsalt"] = "earlock"
plt.rcParams["font.size"] = 9


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_cmc(curves: dict, path, title: str = "Cumulative match characteristic") -> Path:
    """One step line per label in ``curves`` ({label: CmcCurve})."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, curve in curves.items():
        if not curve.points:
            continue
        ranks, rates = zip(*curve.points)
        ax.step(ranks, rates, where="post", label=str(label))
    ax.set_xlabel("Rank")
    ax.set_ylabel("Identification rate")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower right")
    return _save(fig, path)


def plot_roc(curves: dict, path, title: str = "Receiver operating characteristic") -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=0.8)
    for label, curve in curves.items():
        if not curve.points:
            continue
        fpr = [0.0] + [p.fpr for p in curve.points]
        tpr = [0.0] + [p.tpr for p in curve.points]
        ax.plot(fpr, tpr, label=str(label))
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower right")
    return _save(fig, path)
