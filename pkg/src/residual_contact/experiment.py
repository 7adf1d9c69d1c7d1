"""Evaluation metrics, the training-size sweep and the end-to-end pipeline."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analytic import ContactParams
from .dataset import Dataset
from .dynamics import BodyModel
from .errors import ValidationError
from .oracle import OracleConfig, generate_oracle_dataset
from .policy import PolicyParams
from .simulator import simulate
from .sysid import MhConfig, ParamChain, chain_point_estimate, metropolis_hastings
from .trainer import FitnessEvaluator, RolloutConfig, TrainConfig, TrainResult, train

log = logging.getLogger(__name__)

TAGS = ("analytical", "residual")


def evaluate(policy: Optional[PolicyParams], dataset, body: BodyModel,
             contact_params: ContactParams, n_eval_rollouts: int = 8, seed: int = 0,
             stochastic: bool = True):
    """Mean and std of the trajectory loss over test trajectories and rollouts."""
    trajs = dataset.trajectories if isinstance(dataset, Dataset) else list(dataset)
    if not trajs:
        raise ValidationError("dataset is empty")
    n = n_eval_rollouts if policy is not None and stochastic else 1
    cfg = RolloutConfig(dt=trajs[0].dt, samples_per_loss=n, seed=seed)
    ev = FitnessEvaluator(trajs, policy, body, contact_params, cfg, stochastic=stochastic)
    theta = policy.theta if policy is not None else np.zeros(1)
    losses = ev.rollout_losses(theta[None], [seed, 0x5EED])[0]
    return float(losses.mean()), float(losses.std())


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)       # (n, tag, mean_rmse, std_rmse)
    per_seed: list = field(default_factory=list)   # (seed, n, tag, mean_rmse)
    metadata: dict = field(default_factory=dict)

    def curve(self, tag: str):
        pts = [(n, m, s) for n, t, m, s in self.rows if t == tag]
        return tuple(np.array(c) for c in zip(*pts)) if pts else (np.array([]),) * 3

    def crossover(self) -> Optional[int]:
        """Smallest training size where the residual mean beats the analytical mean."""
        base = {n: m for n, t, m, _ in self.rows if t == "analytical"}
        for n, t, m, _ in self.rows:
            if t == "residual" and n > 0 and m < base[n]:
                return n
        return None

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_train", "model", "mean_rmse", "std_rmse"])
            for n, tag, m, s in self.rows:
                w.writerow([n, tag, repr(m), repr(s)])

    def save_per_seed_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "n_train", "model", "mean_rmse"])
            for row in self.per_seed:
                w.writerow([row[0], row[1], row[2], repr(row[3])])


def events_per_trajectory(trajs, body: BodyModel, contact_params: ContactParams) -> float:
    """Mean number of contact events in analytical rollouts from the observed initial states."""
    counts = []
    for tr in trajs:
        _, impacts = simulate(tr.states[0], body, contact_params, len(tr), tr.dt,
                              max_log=16 * len(tr))
        counts.append(sum(imp.event_start for imp in impacts))
    return float(np.mean(counts))


def split_dataset(dataset: Dataset, test_count: int):
    """Training pool first, held-out test set last."""
    if not 0 < test_count < len(dataset):
        raise ValidationError(f"test_count must be in (0, {len(dataset)})")
    n = len(dataset)
    return list(dataset.trajectories[: n - test_count]), list(dataset.trajectories[n - test_count:])


def sweep(dataset: Dataset, train_n_list: Sequence[int], test_count: int, body: BodyModel,
          contact_params: ContactParams, train_cfg: TrainConfig = TrainConfig(),
          seeds: Sequence[int] = (0,), samples_per_loss: int = 4,
          n_eval_rollouts: int = 8, progress=None) -> SweepResult:
    """Train a fresh policy per training size and seed and score it on the test set.

    Training subsets are drawn at random from the pool with the seed. A
    training size of zero means no policy, so both rows coincide.
    """
    ns = list(train_n_list)
    if any(b <= a for a, b in zip(ns, ns[1:])) or not ns or ns[0] < 0:
        raise ValidationError("training sizes must be non-negative and strictly increasing")
    pool, test = split_dataset(dataset, test_count)
    if ns[-1] > len(pool):
        raise ValidationError(f"training size {ns[-1]} exceeds the pool of {len(pool)}")

    base_mean, base_std = evaluate(None, test, body, contact_params)
    result = SweepResult(metadata={"test_count": test_count, "seeds": list(seeds),
                                   "pool": len(pool), "max_iter": train_cfg.max_iter,
                                   "events_per_trajectory":
                                       events_per_trajectory(pool, body, contact_params)})
    scores = {n: [] for n in ns}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(pool))
        for n in ns:
            if n == 0:
                m = base_mean
            else:
                train_set = [pool[i] for i in np.sort(order[:n])]
                rc = RolloutConfig(dt=dataset.dt, samples_per_loss=samples_per_loss, seed=seed)
                res = train(train_set, body, contact_params, rc, train_cfg)
                m, _ = evaluate(res.policy, test, body, contact_params, n_eval_rollouts,
                                seed=10_000 + seed)
            scores[n].append(m)
            result.per_seed.append((seed, n, "residual", m))
            if progress is not None:
                progress(seed, n, m, base_mean)
    for n in ns:
        result.rows.append((n, "analytical", base_mean, base_std))
        s = np.array(scores[n])
        result.rows.append((n, "residual", float(s.mean()), float(s.std())))
    return result


@dataclass
class PipelineResult:
    contact_params: ContactParams
    chain: Optional[ParamChain]
    baseline: tuple
    residual: list             # (mean, std) per seed
    policies: list
    timings: dict

    @property
    def improvement(self) -> float:
        """Relative test-loss reduction averaged over seeds."""
        mean = float(np.mean([m for m, _ in self.residual]))
        return 1.0 - mean / self.baseline[0]


def run_pipeline(dataset: Dataset, test_count: int, train_cfg: TrainConfig = TrainConfig(),
                 seeds: Sequence[int] = (0, 1, 2), mh_cfg: Optional[MhConfig] = MhConfig(),
                 contact_params: Optional[ContactParams] = None, samples_per_loss: int = 4,
                 n_eval_rollouts: int = 8, callback=None) -> PipelineResult:
    """Identify (mu, eps) on the training split, then train and test residual policies.

    ``contact_params`` skips identification when given.
    """
    body = dataset.body
    train_set, test = split_dataset(dataset, test_count)
    timings = {}
    chain = None
    t0 = time.perf_counter()
    if contact_params is None:
        chain = metropolis_hastings(train_set, body, mh_cfg)
        contact_params = chain_point_estimate(chain)
        log.info("identified mu=%.4f eps=%.4f", contact_params.mu, contact_params.eps)
    timings["sysid"] = time.perf_counter() - t0

    baseline = evaluate(None, test, body, contact_params)
    residual, policies = [], []
    for seed in seeds:
        t0 = time.perf_counter()
        rc = RolloutConfig(dt=dataset.dt, samples_per_loss=samples_per_loss, seed=seed)
        res: TrainResult = train(train_set, body, contact_params, rc, train_cfg,
                                 callback=callback)
        timings[f"train_seed{seed}"] = time.perf_counter() - t0
        residual.append(evaluate(res.policy, test, body, contact_params, n_eval_rollouts,
                                 seed=10_000 + seed))
        policies.append(res)
        log.info("seed %d: test %.5f vs baseline %.5f", seed, residual[-1][0], baseline[0])
    return PipelineResult(contact_params, chain, baseline, residual, policies, timings)


def oracle_pipeline(oracle_cfg: OracleConfig = OracleConfig(), test_count: int = 40, **kw):
    body = BodyModel.square()
    return run_pipeline(generate_oracle_dataset(oracle_cfg, body), test_count, **kw)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path
