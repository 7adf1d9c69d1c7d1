"""Metropolis-Hastings identification of friction and restitution from trajectories."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .analytic import ContactParams
from .dynamics import BodyModel, Trajectory
from .errors import ValidationError
from .simulator import policy_args

log = logging.getLogger(__name__)

MU_BOUNDS = (0.0, 2.0)
EPS_BOUNDS = (0.0, 1.0)
OBS_NOISE = 0.002  # m, per-step observation noise behind the default beta


@dataclass(frozen=True)
class MhConfig:
    n_samples: int = 3000
    burn_in: int = 1000
    proposal_sigma: float = 0.05
    likelihood_beta: float = 1.0 / (2.0 * OBS_NOISE ** 2)
    seed: int = 0
    init: tuple = (0.5, 0.5)

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_samples:
            raise ValidationError("burn_in must be in [0, n_samples)")
        if not self.proposal_sigma > 0:
            raise ValidationError("proposal_sigma must be positive")
        if self.likelihood_beta < 0:
            raise ValidationError("likelihood_beta must be non-negative")
        if not _in_bounds(np.asarray(self.init, dtype=float)):
            raise ValidationError("initial parameters are outside the bounds")

    @classmethod
    def from_dict(cls, d: dict) -> "MhConfig":
        d = dict(d)
        if "init" in d:
            d["init"] = tuple(d["init"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None


@dataclass
class ParamChain:
    samples: np.ndarray                 # (n, 2) columns mu, eps
    log_likelihood: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "eps", "logL", "accepted"])
            for (mu, eps), ll, acc in zip(self.samples, self.log_likelihood, self.accepted):
                w.writerow([repr(float(mu)), repr(float(eps)), repr(float(ll)), int(acc)])

    def summary(self) -> dict:
        est = chain_point_estimate(self)
        return {"mu_median": est.mu, "eps_median": est.eps,
                "acceptance_rate": self.acceptance_rate, "n_samples": len(self), **self.extra}


def _in_bounds(r) -> bool:
    return bool(MU_BOUNDS[0] <= r[0] <= MU_BOUNDS[1] and EPS_BOUNDS[0] <= r[1] <= EPS_BOUNDS[1])


class _SquaredErrorSum:
    """Sum over trajectories of the squared deterministic-rollout loss."""

    def __init__(self, dataset: Sequence[Trajectory], body: BodyModel):
        if not dataset:
            raise ValidationError("dataset is empty")
        dt = dataset[0].dt
        for tr in dataset:
            if abs(tr.dt - dt) > 1e-12:
                raise ValidationError("trajectories must share one dt")
        self.dt = dt
        self.body = body
        groups = {}
        for tr in dataset:
            groups.setdefault(len(tr), []).append(tr.state_array)
        self.groups = [(n, np.ascontiguousarray(np.stack(a))) for n, a in groups.items()]
        theta, self._sizes, self._shift, self._scale, *self._scales = policy_args(None)
        self._theta = theta[None, :]

    def __call__(self, mu: float, eps: float) -> float:
        b = self.body
        terms = []
        for n, obs in self.groups:
            idx = np.arange(len(obs))
            losses, _ = K.batch_losses(
                obs, idx, n, self.dt, b.vertices, b.mass, b.inertia, b.gravity, mu, eps,
                False, False, self._theta, np.zeros(len(obs), dtype=np.int64), self._sizes,
                self._shift, self._scale, *self._scales, np.zeros((1, n, 2)),
                np.zeros(len(obs), dtype=np.int64))
            terms.extend(losses ** 2)
        # exactly rounded, so the value does not depend on trajectory order
        return math.fsum(terms)


def sysid_log_likelihood(params: ContactParams, dataset: Sequence[Trajectory], body: BodyModel,
                         beta: float = MhConfig.likelihood_beta) -> float:
    """``-beta * sum_traj loss^2`` with the residual branch disabled."""
    return -beta * _SquaredErrorSum(dataset, body)(params.mu, params.eps)


def metropolis_hastings(dataset: Sequence[Trajectory], body: BodyModel, cfg: MhConfig,
                        log_likelihood=None) -> ParamChain:
    """Random-walk MH over ``(mu, eps)`` with out-of-bounds proposals rejected.

    ``log_likelihood`` may replace the trajectory likelihood with any
    callable of a 2-vector; it is used to check the sampler itself.
    """
    if log_likelihood is None:
        sse = _SquaredErrorSum(dataset, body)
        beta = cfg.likelihood_beta

        def log_likelihood(r):
            return -beta * sse(float(r[0]), float(r[1])) if beta > 0 else 0.0

    rng = np.random.default_rng(cfg.seed)
    cur = np.array(cfg.init, dtype=float)
    cur_ll = float(log_likelihood(cur))
    n = cfg.n_samples
    samples = np.empty((n, 2))
    lls = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    for k in range(n):
        prop = cur + cfg.proposal_sigma * rng.standard_normal(2)
        u = rng.uniform()
        if _in_bounds(prop):
            prop_ll = float(log_likelihood(prop))
            if u == 0.0 or math.log(u) < prop_ll - cur_ll:
                cur, cur_ll = prop, prop_ll
                accepted[k] = True
        samples[k] = cur
        lls[k] = cur_ll
        if log.isEnabledFor(logging.DEBUG) and k % 500 == 0:
            log.debug("mh sample %d at mu=%.4f eps=%.4f logL=%.6g", k, cur[0], cur[1], cur_ll)
    keep = slice(cfg.burn_in, n)
    rate = float(accepted[keep].mean())
    return ParamChain(samples[keep].copy(), lls[keep].copy(), accepted[keep].copy(), rate,
                      {"config": asdict(cfg)})


def chain_point_estimate(chain: ParamChain) -> ContactParams:
    if len(chain) == 0:
        raise ValidationError("chain is empty")
    med = np.median(chain.samples, axis=0)
    return ContactParams(float(med[0]), float(med[1]))


def save_chain(chain: ParamChain, out_dir, stem: str = "chain") -> tuple:
    out = Path(out_dir)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}_summary.json"
    chain.save_csv(csv_path)
    json_path.write_text(json.dumps(chain.summary(), indent=2, default=list))
    return csv_path, json_path
