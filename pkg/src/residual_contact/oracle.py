"""High-fidelity reference trajectories from a compliant (penalty) contact model.

The analytical impulse model cannot reproduce these exactly: contact lasts a
finite time, the body keeps rotating while in contact, and friction is a
smooth function of slip. That gap is what the residual policy learns.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .dataset import Dataset
from .dynamics import BodyModel, Trajectory
from .errors import InstabilityError, ValidationError


@dataclass(frozen=True)
class OracleConfig:
    stiffness: float = 2.0e4          # N/m per contacting vertex
    damping: float = 8.0              # N s/m, identified restitution near 0.6
    mu_true: float = 0.3
    friction_reg_speed: float = 0.01  # m/s, slip speed at which friction saturates
    substep_dt: float = 1e-5
    sample_rate: float = 250.0
    duration: float = 0.6
    n_trajectories: int = 200
    seed: int = 0
    height: tuple = (0.15, 0.35)
    angle: tuple = (-math.pi, math.pi)
    vx: tuple = (-1.0, 1.0)
    vz: tuple = (-1.0, 0.5)
    omega: tuple = (-15.0, 15.0)
    max_energy_growth: float = 0.01

    def __post_init__(self):
        if not (self.stiffness > 0 and self.damping > 0):
            raise ValidationError("stiffness and damping must be positive")
        if not self.substep_dt > 0 or self.substep_dt * self.sample_rate > 0.1:
            raise ValidationError("substep_dt must be much smaller than the sample interval")
        ratio = 1.0 / (self.sample_rate * self.substep_dt)
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValidationError("the sample interval must be a whole number of substeps")
        if self.n_trajectories < 1:
            raise ValidationError("n_trajectories must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate)) + 1

    @classmethod
    def from_dict(cls, d: dict) -> "OracleConfig":
        d = dict(d)
        for key in ("height", "angle", "vx", "vz", "omega"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def sample_initial_states(cfg: OracleConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_trajectories
    s0 = np.zeros((n, 6))
    s0[:, 1] = rng.uniform(*cfg.height, n)
    s0[:, 2] = rng.uniform(*cfg.angle, n)
    s0[:, 3] = rng.uniform(*cfg.vx, n)
    s0[:, 4] = rng.uniform(*cfg.vz, n)
    s0[:, 5] = rng.uniform(*cfg.omega, n)
    return s0


def simulate_compliant(s0, body: BodyModel, cfg: OracleConfig, n_samples: int | None = None):
    """One reference trajectory at the sample rate; returns ``(states, energy_growth, depth)``."""
    n = n_samples or cfg.n_samples
    substeps = int(round(1.0 / (cfg.sample_rate * cfg.substep_dt)))
    out = np.empty((n, 6))
    growth, depth = K.compliant_simulate(
        np.asarray(s0, dtype=float), n, substeps, cfg.substep_dt, body.vertices, body.mass,
        body.inertia, body.gravity, cfg.stiffness, cfg.damping, cfg.mu_true,
        cfg.friction_reg_speed, out)
    return out, growth, depth


def generate_oracle_dataset(cfg: OracleConfig, body: BodyModel) -> Dataset:
    """Drop trajectories from random initial conditions, subsampled to the sample rate."""
    rng = np.random.default_rng(cfg.seed)
    s0 = sample_initial_states(cfg, rng)
    # start above the ground
    for k in range(len(s0)):
        _, zmin = K.lowest_vertex(s0[k], body.vertices)
        if zmin < 0.01:
            s0[k, 1] += 0.01 - zmin
    dt = 1.0 / cfg.sample_rate
    trajectories = []
    deepest = 0.0
    for k, s in enumerate(s0):
        states, growth, depth = simulate_compliant(s, body, cfg)
        if growth > cfg.max_energy_growth:
            raise InstabilityError(
                f"trajectory {k}: energy grew by {100 * growth:.2f}% over a contact; "
                "reduce substep_dt or damping")
        if not np.all(np.isfinite(states)):
            raise InstabilityError(f"trajectory {k} diverged; reduce substep_dt")
        deepest = max(deepest, depth)
        trajectories.append(Trajectory.from_state_array(states, dt))
    return Dataset(trajectories, body, cfg.sample_rate, provenance="oracle",
                   oracle_params=cfg.to_dict(), metadata={"max_penetration": deepest})
