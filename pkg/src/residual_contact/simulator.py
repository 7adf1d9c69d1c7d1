"""Fixed-rate simulation of the analytical model with an optional residual policy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .analytic import ContactParams
from .dynamics import BodyModel, State, Trajectory
from .errors import CorruptStateError
from .policy import PolicyParams

_DUMMY_POLICY = PolicyParams.zeros()


@dataclass(frozen=True)
class ImpactRecord:
    time: float
    vertex: int
    post_state: np.ndarray
    v_c: np.ndarray
    delassus: np.ndarray
    event_start: bool

    @property
    def features(self) -> np.ndarray:
        A = self.delassus
        Mc = np.linalg.inv(A)
        return np.array([Mc[0, 0], Mc[0, 1], Mc[1, 1], self.v_c[0], self.v_c[1]])


def policy_args(policy: Optional[PolicyParams]):
    p = policy if policy is not None else _DUMMY_POLICY
    return (p.theta, p.sizes_array, p.feature_shift, p.feature_scale,
            p.impulse_scale, p.sigma_scale, p.sigma_min)


def noise_buffer(seed: int, n_steps: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((max(n_steps, 1), 2 * K.RESIDUAL_DRAWS))


def simulate(state0: State, body: BodyModel, params: ContactParams, n_steps: int, dt: float,
             policy: Optional[PolicyParams] = None, stochastic: bool = True, seed: int = 0,
             noise: Optional[np.ndarray] = None, max_log: int = 0):
    """Roll the model forward for ``n_steps`` samples (including the initial one).

    Returns ``(trajectory, impacts)``; ``impacts`` holds at most ``max_log``
    records of individual impulses.
    """
    if not state0.is_finite():
        raise CorruptStateError(f"non-finite initial state {state0}")
    out = np.empty((n_steps, 6))
    log = np.empty((max_log, K.LOG_COLUMNS))
    zbuf = noise if noise is not None else noise_buffer(seed, n_steps)
    theta, sizes, shift, scale, iscale, sscale, smin = policy_args(policy)
    _, n_logged, _ = K.simulate(
        state0.as_array(), n_steps, dt, body.vertices, body.mass, body.inertia, body.gravity,
        params.mu, params.eps, policy is not None, stochastic,
        theta, sizes, shift, scale, iscale, sscale, smin, zbuf, out, log)
    traj = Trajectory.from_state_array(out, dt, t0=state0.t)
    impacts = []
    for row in log[:n_logged]:
        a = np.array([[row[10], row[11]], [row[11], row[12]]])
        impacts.append(ImpactRecord(time=state0.t + row[0] * dt, vertex=int(row[1]),
                                    post_state=row[2:8].copy(), v_c=row[8:10].copy(),
                                    delassus=a, event_start=bool(row[13])))
    return traj, impacts
