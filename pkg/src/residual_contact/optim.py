"""Gradient-free optimizers with an ask/tell interface.

``CMAES`` follows the standard (mu/mu_w, lambda) scheme with cumulative
step-size adaptation and rank-one plus rank-mu covariance updates. With
``diagonal=True`` only the diagonal of the covariance is adapted, using the
correspondingly faster learning rates.
"""
from __future__ import annotations

import math

import numpy as np


def default_population(dim: int) -> int:
    return 4 + int(math.floor(3 * math.log(dim)))


class CMAES:
    def __init__(self, x0, sigma0: float, popsize: int | None = None, seed: int = 0,
                 diagonal: bool = False):
        self.mean = np.array(x0, dtype=float)
        n = self.dim = self.mean.size
        self.sigma = float(sigma0)
        self.lam = popsize or default_population(n)
        self.mu = self.lam // 2
        self.rng = np.random.default_rng(seed)
        self.diagonal = diagonal

        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        if diagonal:
            factor = (n + 2) / 3
            self.c1 = min(1.0, self.c1 * factor)
            self.cmu = min(1 - self.c1, self.cmu * factor)
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        if diagonal:
            self.C = np.ones(n)
            self.D = np.ones(n)
        else:
            self.C = np.eye(n)
            self.B = np.eye(n)
            self.D = np.ones(n)
            self.invsqrtC = np.eye(n)
        self.generation = 0
        self._eigen_gen = 0
        self._z = None

    def _transform(self, z):
        if self.diagonal:
            return z * self.D
        return (z * self.D) @ self.B.T

    def ask(self) -> np.ndarray:
        self._z = self.rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * self._transform(self._z)

    def tell(self, candidates: np.ndarray, fitness) -> None:
        n = self.dim
        order = np.argsort(np.asarray(fitness), kind="stable")
        old_mean = self.mean
        y = (np.asarray(candidates)[order[: self.mu]] - old_mean) / self.sigma
        y_w = self.weights @ y
        self.mean = old_mean + self.sigma * y_w

        if self.diagonal:
            c_inv_sqrt_yw = y_w / self.D
        else:
            c_inv_sqrt_yw = self.invsqrtC @ y_w
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * c_inv_sqrt_yw
        ps_norm = np.linalg.norm(self.ps)
        self.generation += 1
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y_w

        c1a = self.c1 * (1 - (1 - hsig ** 2) * self.cc * (2 - self.cc))
        if self.diagonal:
            rank_mu = self.weights @ (y * y)
            self.C = (1 - c1a - self.cmu) * self.C + self.c1 * self.pc ** 2 + self.cmu * rank_mu
            self.D = np.sqrt(self.C)
        else:
            rank_mu = (y.T * self.weights) @ y
            self.C = ((1 - c1a - self.cmu) * self.C + self.c1 * np.outer(self.pc, self.pc)
                      + self.cmu * rank_mu)
            if self.generation - self._eigen_gen > self.lam / (self.c1 + self.cmu) / n / 10:
                self._eigen_gen = self.generation
                self.C = np.triu(self.C) + np.triu(self.C, 1).T
                evals, self.B = np.linalg.eigh(self.C)
                self.D = np.sqrt(np.maximum(evals, 1e-300))
                self.invsqrtC = (self.B / self.D) @ self.B.T

        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chi_n - 1))


class OnePlusOneES:
    """(1+1)-ES with the one-fifth success rule."""

    def __init__(self, x0, sigma0: float, seed: int = 0):
        self.mean = np.array(x0, dtype=float)
        self.dim = self.mean.size
        self.sigma = float(sigma0)
        self.rng = np.random.default_rng(seed)
        self.lam = 1
        self.generation = 0

    def ask(self) -> np.ndarray:
        return (self.mean + self.sigma * self.rng.standard_normal(self.dim))[None, :]

    def tell(self, candidates, fitness, parent_fitness: float) -> None:
        self.generation += 1
        if fitness[0] <= parent_fitness:
            self.mean = np.array(candidates[0], dtype=float)
            self.sigma *= math.exp(1 / 3)
        else:
            self.sigma *= math.exp(-1 / 12)
