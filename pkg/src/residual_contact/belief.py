"""Gaussian-mixture beliefs propagated from one contact event to the next.

Free flight is deterministic, so all uncertainty enters at contact: the
residual policy's impulse covariance is pushed through the impulse-velocity
map, and particles drawn from the mixture are flown to their next impact with
the exact ballistic solution.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .analytic import ContactParams, Impulse, resolve_contact
from .dynamics import (CONTACT_TOL, BodyModel, ContactInfo, State, contact_jacobian,
                       total_energy)
from .errors import BeliefCollapseError, ValidationError
from .frame import features
from .policy import ImpulseDistribution, PolicyParams, policy_eval

log = logging.getLogger(__name__)

ENERGY_TOL = K.ENERGY_TOL
MAX_RETRIES = 10


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    times: Optional[np.ndarray] = None
    last_contact: Optional[np.ndarray] = None   # NaN where a component has not touched down

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float).reshape(-1, 6, 6)
        k = len(self.weights)
        self.times = np.zeros(k) if self.times is None else np.asarray(self.times, dtype=float)
        self.last_contact = (np.full(k, np.nan) if self.last_contact is None
                             else np.asarray(self.last_contact, dtype=float))
        if (k == 0 or self.means.shape != (k, 6) or self.covs.shape != (k, 6, 6)
                or self.times.shape != (k,) or self.last_contact.shape != (k,)):
            raise ValidationError("mixture arrays have inconsistent shapes")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must be positive and sum to one")
        if not np.allclose(self.covs, np.transpose(self.covs, (0, 2, 1)), rtol=0, atol=1e-12):
            raise ValidationError("component covariances must be symmetric")
        for c in self.covs:
            if np.linalg.eigvalsh(c).min() < -1e-12:
                raise ValidationError("component covariances must be positive semi-definite")

    @property
    def K(self) -> int:
        return len(self.weights)

    @classmethod
    def single(cls, mean, cov, t: float = 0.0) -> "GaussianMixture":
        return cls(np.ones(1), np.asarray(mean, float)[None], np.asarray(cov, float)[None],
                   np.array([t]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Total covariance: within-component plus spread of the means."""
        d = self.means - self.mean()
        return np.einsum("k,kij->ij", self.weights, self.covs) + (d.T * self.weights) @ d

    def trace(self) -> float:
        return float(np.trace(self.covariance()))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covariances": self.covs.tolist(), "times": self.times.tolist(),
                "last_contact": [None if np.isnan(t) else t for t in self.last_contact]}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        last = d.get("last_contact")
        return cls(np.array(d["weights"]), np.array(d["means"]), np.array(d["covariances"]),
                   np.array(d["times"]) if "times" in d else None,
                   None if last is None else np.array([np.nan if t is None else t for t in last]))


@dataclass
class DynamicStepResult:
    belief: GaussianMixture
    event_time: float
    samples_discarded: int = 0
    samples_drawn: int = 0
    particles_dropped: int = 0
    n_contacts: int = 0
    pre_event_energy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def discarded_fraction(self) -> float:
        return self.samples_discarded / self.samples_drawn if self.samples_drawn else 0.0

    def to_dict(self) -> dict:
        return {"event_time": self.event_time, "samples_discarded": self.samples_discarded,
                "samples_drawn": self.samples_drawn, "particles_dropped": self.particles_dropped,
                "n_contacts": self.n_contacts, "belief": self.belief.to_dict()}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def impulse_to_velocity(body: BodyModel, J: np.ndarray) -> np.ndarray:
    """``M^-1 J^T``: the 3x2 linear map from contact impulse to velocity change."""
    return body.inv_mass_matrix @ J.T


def push_impulse_uncertainty(state_pre: State, body: BodyModel, J: np.ndarray, p_m: Impulse,
                             dist: ImpulseDistribution, f_ext_dt=(0.0, 0.0, 0.0)):
    """Gaussian over the post-contact state induced by a Gaussian residual impulse.

    The configuration block keeps the pre-contact configuration with zero
    covariance; only the velocity block is uncertain.
    """
    G = impulse_to_velocity(body, J)
    v_mean = (state_pre.v + body.inv_mass_matrix @ np.asarray(f_ext_dt, float)
              + G @ (p_m.as_array() + np.asarray(dist.mean)))
    cov = np.zeros((6, 6))
    cov[3:, 3:] = G @ np.asarray(dist.cov) @ G.T
    cov = 0.5 * (cov + cov.T)
    return np.concatenate([state_pre.q, v_mean]), cov


def feasibility_filter(candidate: State, pre_event_energy: float, body: BodyModel) -> bool:
    """No vertex below ``-CONTACT_TOL`` and no gain in total energy."""
    _, zmin = K.lowest_vertex(candidate.as_array(), body.vertices)
    if zmin < -CONTACT_TOL:
        return False
    return total_energy(candidate, body) <= pre_event_energy + ENERGY_TOL


def _sample_gaussian(rng, mean, cov):
    evals, evecs = np.linalg.eigh(cov)
    return mean + evecs @ (np.sqrt(np.maximum(evals, 0.0)) * rng.standard_normal(len(mean)))


def _systematic_resample(weights, m, rng) -> np.ndarray:
    positions = (rng.uniform() + np.arange(m)) / m
    idx = np.searchsorted(np.cumsum(weights), positions, side="right")
    return np.minimum(idx, len(weights) - 1)


def _is_resting(mean, body) -> bool:
    return bool(K.is_resting(np.asarray(mean, float), body.vertices, body.radius_of_gyration))


def _ballistic_pushforward(mean, cov, body, tau):
    A = np.eye(6)
    A[0, 3] = A[1, 4] = A[2, 5] = tau
    out = np.empty(6)
    K.ballistic(np.asarray(mean, float), body.gravity, tau, out)
    return out, A @ cov @ A.T


def contact_distribution(policy: Optional[PolicyParams], x) -> ImpulseDistribution:
    if policy is None:
        return ImpulseDistribution(np.zeros(2), np.zeros((2, 2)))
    return policy_eval(policy, x)


def _continues_event(t_prev: float, t_hit: float, dt: float) -> bool:
    """True when the previous impulse fell in this timestep or the one before."""
    if np.isnan(t_prev):
        return False
    return np.floor(t_hit / dt + 1e-9) - np.floor(t_prev / dt + 1e-9) <= 1


def propagate_belief(belief: GaussianMixture, body: BodyModel, contact_params: ContactParams,
                     policy: Optional[PolicyParams], m_samples: int = 50, seed: int = 0,
                     dt: float = 0.004, t_end: float = 2.0,
                     max_retries: int = MAX_RETRIES) -> DynamicStepResult:
    """One stochastic dynamic step: every particle to the end of its next contact.

    Particles are drawn from the mixture by systematic resampling, flown to
    impact, and replaced by the Gaussian over post-contact states. Candidates
    that penetrate or gain energy are redrawn up to ``max_retries`` times
    before the particle is dropped.

    As in the simulator, the residual only acts on the first impulse of a
    contact event; later impulses of the same event are deterministic.
    """
    if m_samples < 1:
        raise ValidationError("m_samples must be >= 1")
    rng = np.random.default_rng(seed)

    if all(_is_resting(mu, body) for mu in belief.means):
        return DynamicStepResult(belief, t_end)

    comp = _systematic_resample(belief.weights, m_samples, rng)
    means, covs, times, lasts, energies = [], [], [], [], []
    discarded = drawn = dropped = contacts = 0
    for i, c in enumerate(comp):
        prng = np.random.default_rng([seed, i])
        s = _sample_gaussian(prng, belief.means[c], belief.covs[c])
        status, t_hit, vertex = K.flight_to_contact(s, float(belief.times[c]), t_end, dt,
                                                    body.vertices, body.mass, body.inertia,
                                                    body.gravity)
        if status != 0:
            means.append(s)
            covs.append(np.zeros((6, 6)))
            times.append(t_hit if status == 1 else t_end)
            lasts.append(belief.last_contact[c])
            energies.append(total_energy(State.from_array(s), body))
            continue
        contacts += 1
        pre = State.from_array(s, t=t_hit)
        rx, rz = K.vertex_offset(pre.theta, body.vertices, vertex)
        contact = ContactInfo(point=np.array([pre.x + rx, pre.z + rz]), normal=np.array([0.0, 1.0]),
                              penetration_depth=-(pre.z + rz), vertex_index=int(vertex))
        J = contact_jacobian(pre, contact)
        p_m = resolve_contact(pre, body, contact, contact_params)
        if _continues_event(belief.last_contact[c], t_hit, dt):
            dist = contact_distribution(None, None)
        else:
            dist = contact_distribution(policy, features(pre, body, contact))
        mean, cov = push_impulse_uncertainty(pre, body, J, p_m, dist)
        e_pre = total_energy(pre, body)

        candidate = mean
        ok = False
        for attempt in range(max_retries + 1):
            if attempt > 0:
                candidate = _sample_gaussian(prng, mean, cov)
            drawn += 1
            if feasibility_filter(State.from_array(candidate, t_hit), e_pre, body):
                ok = True
                break
            discarded += 1
        if not ok:
            dropped += 1
            continue
        if _is_resting(candidate, body):
            candidate = candidate.copy()
            candidate[3:] = 0.0
            cov = np.zeros((6, 6))
        means.append(candidate)
        covs.append(cov)
        times.append(t_hit)
        lasts.append(t_hit)
        energies.append(e_pre)

    if contacts == 0:
        # no particle reaches contact: exact pushforward of every component
        out_means, out_covs = [], []
        for mu, cov, t0 in zip(belief.means, belief.covs, belief.times):
            if _is_resting(mu, body) or t0 >= t_end:
                out_means.append(mu)
                out_covs.append(cov)
            else:
                m2, c2 = _ballistic_pushforward(mu, cov, body, t_end - t0)
                out_means.append(m2)
                out_covs.append(c2)
        mix = GaussianMixture(belief.weights, np.array(out_means), np.array(out_covs),
                              np.full(belief.K, t_end), belief.last_contact)
        energies = [total_energy(State.from_array(mu), body) for mu in out_means]
        return DynamicStepResult(mix, t_end, pre_event_energy=np.array(energies))

    if not means:
        raise BeliefCollapseError(
            f"all {m_samples} particles were infeasible after contact; retry with more samples")

    k = len(means)
    weights = np.full(k, 1.0 / k)
    weights[-1] = 1.0 - weights[:-1].sum()
    mix = GaussianMixture(weights, np.array(means), np.array(covs), np.array(times),
                          np.array(lasts))
    contact_times = [t for t, tl in zip(times, lasts) if t == tl] or times
    result = DynamicStepResult(mix, float(np.mean(contact_times)), discarded, drawn, dropped,
                               contacts, np.array(energies))
    log.info("dynamic step: %d contacts, %d/%d candidates discarded, %d particles dropped",
             contacts, discarded, drawn, dropped)
    return result


def dynamic_step(belief: GaussianMixture, body: BodyModel, contact_params: ContactParams,
                 policy: Optional[PolicyParams], m_samples: int = 50, seed: int = 0,
                 dt: float = 0.004, t_end: float = 2.0) -> DynamicStepResult:
    """Advance the belief from the end of one contact event to the end of the next."""
    return propagate_belief(belief, body, contact_params, policy, m_samples, seed, dt, t_end)


def predict(belief: GaussianMixture, body: BodyModel, contact_params: ContactParams,
            policy: Optional[PolicyParams], n_events: int, m_samples: int = 50, seed: int = 0,
            dt: float = 0.004, t_end: float = 2.0) -> list:
    """Fold :func:`dynamic_step` over up to ``n_events`` contact events."""
    results = []
    for k in range(n_events):
        res = dynamic_step(belief, body, contact_params, policy, m_samples,
                           seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]),
                           dt=dt, t_end=t_end)
        results.append(res)
        belief = res.belief
        if res.n_contacts == 0:
            break
    return results
