"""Static figures written next to the CSV outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(result, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for tag, style in (("analytical", "--"), ("residual", "-o")):
        n, m, s = result.curve(tag)
        if n.size:
            ax.plot(n, m, style, label=tag)
            ax.fill_between(n, m - s, m + s, alpha=0.2)
    ax.set_xlabel("training trajectories")
    ax.set_ylabel("test RMSE [m]")
    ax.legend()
    return _save(fig, path)


def plot_chain(chain, path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    mu, eps = chain.samples[:, 0], chain.samples[:, 1]
    axes[0].hist(mu, bins=40)
    axes[0].set_xlabel("friction coefficient")
    axes[1].hist(eps, bins=40)
    axes[1].set_xlabel("restitution")
    axes[2].plot(mu, eps, ".", ms=2, alpha=0.4)
    axes[2].set_xlabel("friction coefficient")
    axes[2].set_ylabel("restitution")
    return _save(fig, path)


def plot_training(history, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(history)), history)
    ax.set_xlabel("generation")
    ax.set_ylabel("best training loss [m]")
    return _save(fig, path)


def plot_beliefs(mixtures, path, truth=None) -> Path:
    """Component means in the x-z plane for a sequence of beliefs, one color each."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = plt.cm.viridis(np.linspace(0, 1, max(len(mixtures), 2)))
    for k, (mix, c) in enumerate(zip(mixtures, colors)):
        ax.scatter(mix.means[:, 0], mix.means[:, 1], s=6, color=c, label=f"event {k}")
    if truth is not None:
        ax.plot(truth[:, 0], truth[:, 1], "k-", lw=0.8, label="mean rollout")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.legend(fontsize=7, markerscale=2)
    return _save(fig, path)


def plot_trajectories(observed, predicted, path, max_traj: int = 4) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, (obs, est) in enumerate(zip(observed[:max_traj], predicted[:max_traj])):
        line, = ax.plot(obs.data[:, 0], obs.data[:, 2], "-", lw=1)
        ax.plot(est.data[:, 0], est.data[:, 2], "--", lw=1, color=line.get_color())
    ax.set_xlabel("t [s]")
    ax.set_ylabel("z [m]")
    return _save(fig, path)
