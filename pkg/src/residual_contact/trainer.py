"""Self-supervised residual training against whole observed trajectories."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .analytic import ContactParams
from .dynamics import BodyModel, Trajectory
from .errors import ValidationError
from .optim import CMAES, OnePlusOneES, default_population
from .policy import INIT_STD, PolicyParams, parameter_count
from .simulator import noise_buffer, policy_args, simulate

log = logging.getLogger(__name__)

OPTIMIZERS = ("cma_es", "one_plus_one_es")


@dataclass(frozen=True)
class RolloutConfig:
    dt: float = 0.004
    horizon: Optional[int] = None
    samples_per_loss: int = 4
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.samples_per_loss < 1:
            raise ValidationError("samples_per_loss must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    max_iter: int = 300
    population: Optional[int] = None
    init_sigma: float = 0.1
    optimizer: str = "cma_es"
    init_std: float = INIT_STD
    diagonal: bool = True
    infeasible_penalty: float = 1e-3   # m per rejected residual draw per contact event

    def __post_init__(self):
        if self.infeasible_penalty < 0:
            raise ValidationError("infeasible_penalty must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.max_iter < 0 or not self.init_sigma > 0:
            raise ValidationError("max_iter must be >= 0 and init_sigma > 0")
        if self.population is not None and self.population < 1:
            raise ValidationError("population must be positive")


@dataclass
class TrainResult:
    policy: PolicyParams
    history: list = field(default_factory=list)
    best_fitness: float = float("inf")
    evaluations: int = 0


def _check_dt(obs: Trajectory, cfg: RolloutConfig):
    if abs(obs.dt - cfg.dt) > 1e-12:
        raise ValidationError(f"trajectory dt {obs.dt} does not match rollout dt {cfg.dt}")


def _length(obs: Trajectory, cfg: RolloutConfig) -> int:
    return len(obs) if cfg.horizon is None else min(len(obs), cfg.horizon)


def rollout(obs: Trajectory, params: Optional[PolicyParams], body: BodyModel,
            contact_params: ContactParams, cfg: RolloutConfig,
            stochastic: bool = True) -> Trajectory:
    """Estimated trajectory started from the first observed state.

    ``params=None`` disables the residual branch; ``stochastic=False`` applies
    the policy mean instead of a sample.
    """
    _check_dt(obs, cfg)
    n = _length(obs, cfg)
    traj, _ = simulate(obs.states[0], body, contact_params, n, cfg.dt, policy=params,
                       stochastic=stochastic, seed=cfg.seed)
    return traj


def trajectory_loss(est: Trajectory, obs: Trajectory, body: BodyModel) -> float:
    """RMS over time of the configuration error in ``(x, z, r_g theta)``."""
    if len(est) != len(obs):
        raise ValidationError(f"trajectory lengths differ ({len(est)} vs {len(obs)})")
    return float(K.scaled_rmse(est.state_array, obs.state_array, body.radius_of_gyration))


def feature_normalization(dataset: Sequence[Trajectory], body: BodyModel,
                          contact_params: ContactParams, cfg: RolloutConfig):
    """Per-feature mean and std over contact events of analytical rollouts."""
    feats = []
    for obs in dataset:
        _check_dt(obs, cfg)
        n = _length(obs, cfg)
        _, impacts = simulate(obs.states[0], body, contact_params, n, cfg.dt, max_log=4 * n)
        feats.extend(imp.features for imp in impacts if imp.event_start)
    if len(feats) < 2:
        return np.zeros(5), np.ones(5)
    feats = np.array(feats)
    scale = feats.std(axis=0)
    scale = np.where(scale > 1e-9 * np.maximum(np.abs(feats.mean(axis=0)), 1e-12), scale, 1.0)
    return feats.mean(axis=0), scale


class FitnessEvaluator:
    """Mean trajectory loss of candidate parameter vectors over a dataset.

    All candidates in one call share the same noise draws (common random numbers).
    """

    def __init__(self, dataset: Sequence[Trajectory], template: Optional[PolicyParams],
                 body: BodyModel, contact_params: ContactParams, cfg: RolloutConfig,
                 stochastic: bool = True, infeasible_penalty: float = 0.0):
        if not dataset:
            raise ValidationError("dataset is empty")
        for obs in dataset:
            _check_dt(obs, cfg)
        self.body = body
        self.params = contact_params
        self.cfg = cfg
        self.template = template
        self.stochastic = stochastic
        self.infeasible_penalty = infeasible_penalty
        groups = {}
        for obs in dataset:
            groups.setdefault(_length(obs, cfg), []).append(obs.state_array[: _length(obs, cfg)])
        self.groups = [(n, np.ascontiguousarray(np.stack(arrs))) for n, arrs in groups.items()]
        self.n_traj = len(dataset)
        self.evaluations = 0

    def rollout_stats(self, thetas: np.ndarray, noise_seed):
        """Per-rollout losses, event counts and rejected residual draws.

        Each has shape ``(n_candidates, n_trajectories, samples_per_loss)``.
        """
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        n_cand = len(thetas)
        spl = self.cfg.samples_per_loss
        use_policy = self.template is not None
        tmpl = self.template or PolicyParams.zeros()
        _, sizes, shift, scale, iscale, sscale, smin = policy_args(tmpl)
        if not use_policy:
            thetas = np.zeros((n_cand, tmpl.theta.size))
        losses, events, rejected = [], [], []
        rng = np.random.default_rng(noise_seed)
        for n_steps, obs in self.groups:
            n_obs = len(obs)
            zbufs = rng.standard_normal((n_obs * spl, n_steps, 2 * K.RESIDUAL_DRAWS))
            cand = np.repeat(np.arange(n_cand), n_obs * spl)
            obs_idx = np.tile(np.repeat(np.arange(n_obs), spl), n_cand)
            z_idx = np.tile(np.arange(n_obs * spl), n_cand)
            loss, counts = K.batch_losses(
                obs, obs_idx, n_steps, self.cfg.dt, self.body.vertices, self.body.mass,
                self.body.inertia, self.body.gravity, self.params.mu, self.params.eps,
                use_policy, self.stochastic, np.ascontiguousarray(thetas), cand, sizes, shift,
                scale, iscale, sscale, smin, zbufs, z_idx)
            shape = (n_cand, n_obs, spl)
            losses.append(loss.reshape(shape))
            events.append(counts[:, 0].reshape(shape))
            rejected.append(counts[:, 1].reshape(shape))
        self.evaluations += n_cand
        return (np.concatenate(losses, axis=1), np.concatenate(events, axis=1),
                np.concatenate(rejected, axis=1))

    def rollout_losses(self, thetas: np.ndarray, noise_seed) -> np.ndarray:
        """Per-rollout losses, shape ``(n_candidates, n_trajectories, samples_per_loss)``."""
        return self.rollout_stats(thetas, noise_seed)[0]

    def __call__(self, thetas: np.ndarray, noise_seed) -> np.ndarray:
        """Mean loss plus ``infeasible_penalty`` per rejected residual draw per contact event."""
        losses, events, rejected = self.rollout_stats(thetas, noise_seed)
        fitness = losses.mean(axis=(1, 2))
        if self.infeasible_penalty > 0:
            rate = rejected.sum(axis=(1, 2)) / np.maximum(events.sum(axis=(1, 2)), 1)
            fitness = fitness + self.infeasible_penalty * rate
        return fitness


def train(dataset: Sequence[Trajectory], body: BodyModel, contact_params: ContactParams,
          rollout_cfg: RolloutConfig, train_cfg: TrainConfig,
          init: Optional[PolicyParams] = None,
          callback: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Optimize the residual policy parameters with a gradient-free search.

    Fitness of a candidate is the dataset mean of the per-trajectory loss,
    averaged over ``samples_per_loss`` stochastic rollouts, plus a small
    penalty for residual draws that the rollout refused for adding energy.
    Returns the best-seen parameters and the per-generation best-so-far fitness.
    """
    if not dataset:
        raise ValidationError("dataset is empty")
    seed = rollout_cfg.seed
    if init is None:
        shift, scale = feature_normalization(dataset, body, contact_params, rollout_cfg)
        init = PolicyParams.random(seed, std=train_cfg.init_std, feature_shift=shift,
                                   feature_scale=scale)
    evaluate = FitnessEvaluator(dataset, init, body, contact_params, rollout_cfg,
                                infeasible_penalty=train_cfg.infeasible_penalty)
    result = TrainResult(policy=init)
    if train_cfg.max_iter == 0:
        return result

    best_theta = init.theta.copy()
    best = np.inf
    dim = parameter_count(init.layer_sizes)
    if train_cfg.optimizer == "cma_es":
        opt = CMAES(init.theta, train_cfg.init_sigma,
                    popsize=train_cfg.population or default_population(dim), seed=seed,
                    diagonal=train_cfg.diagonal)
    else:
        opt = OnePlusOneES(init.theta, train_cfg.init_sigma, seed=seed)

    for gen in range(train_cfg.max_iter):
        noise_seed = [seed, gen]
        cands = opt.ask()
        if isinstance(opt, OnePlusOneES):
            fit = evaluate(np.vstack([opt.mean, cands]), noise_seed)
            parent_fit, fit = fit[0], fit[1:]
            if parent_fit < best:
                best, best_theta = float(parent_fit), opt.mean.copy()
            opt.tell(cands, fit, parent_fit)
        else:
            if gen == 0:
                # score the starting point too, so training never returns worse than it
                fit = evaluate(np.vstack([cands, init.theta]), noise_seed)
                if fit[-1] < best:
                    best, best_theta = float(fit[-1]), init.theta.copy()
                fit = fit[:-1]
            else:
                fit = evaluate(cands, noise_seed)
            opt.tell(cands, fit)
        i = int(np.argmin(fit))
        if fit[i] < best:
            best = float(fit[i])
            best_theta = cands[i].copy()
        result.history.append(best)
        if callback is not None:
            callback(gen, best)
        log.debug("generation %d best %.6g sigma %.3g", gen, best, opt.sigma)

    result.policy = init.with_theta(best_theta)
    result.best_fitness = best
    result.evaluations = evaluate.evaluations
    return result
