"""End-to-end acceptance checks, each at its stated tolerance.

Every test records a one-line outcome that is printed in the terminal
summary, then asserts it.
"""
import time

import numpy as np
import pytest

from residual_contact import _kernels as K
from residual_contact.analytic import ContactParams, Impulse, apply_impulse, resolve_contact
from residual_contact.belief import (GaussianMixture, feasibility_filter, predict,
                                     push_impulse_uncertainty)
from residual_contact.dynamics import (BodyModel, State, contact_jacobian, integrate_free_flight,
                                       kinetic_energy, total_energy)
from residual_contact.experiment import run_pipeline, sweep
from residual_contact.frame import optimal_impulse
from residual_contact.oracle import OracleConfig, generate_oracle_dataset
from residual_contact.policy import ImpulseDistribution, PolicyParams, policy_eval, sample_residual
from residual_contact.simulator import simulate
from residual_contact.sysid import MhConfig, chain_point_estimate, metropolis_hastings
from residual_contact.trainer import RolloutConfig, TrainConfig, train

from conftest import contact_at, random_impact

DROP = np.array([0.0, 0.3, 0.4, 0.2, 0.0, 3.0])
DROP_COV = np.diag([1e-6] * 3 + [1e-4] * 3)
PIPELINE_BUDGET = 30 * 60.0


def record(criteria, key, ok, detail):
    criteria[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def oracle_data():
    return generate_oracle_dataset(OracleConfig(n_trajectories=200, seed=0), BodyModel.square())


@pytest.fixture(scope="module")
def pipeline(oracle_data):
    t0 = time.perf_counter()
    res = run_pipeline(oracle_data, test_count=40, seeds=(0, 1, 2))
    return res, time.perf_counter() - t0


def test_1_residual_improvement(pipeline, criteria):
    res, elapsed = pipeline
    per_seed = ", ".join(f"{m:.5f}" for m, _ in res.residual)
    ok = res.improvement >= 0.15 and elapsed <= PIPELINE_BUDGET
    record(criteria, 1, ok,
           f"improvement {100 * res.improvement:.1f}% (need >= 15%); baseline "
           f"{res.baseline[0]:.5f}, residual per seed {per_seed}; {elapsed / 60:.1f} min")


def test_2_sample_efficiency_crossover(oracle_data, pipeline, criteria):
    params = pipeline[0].contact_params
    res = sweep(oracle_data, [0, 5, 10, 20], 40, oracle_data.body, params, TrainConfig(),
                seeds=(0, 1, 2))
    n_res, m_res, _ = res.curve("residual")
    _, m_base, _ = res.curve("analytical")
    cross = res.crossover()
    curve = ", ".join(f"n={n}: {m:.5f}" for n, m in zip(n_res, m_res))
    record(criteria, 2, cross is not None and cross <= 20,
           f"crossover at n={cross} (need <= 20); baseline {m_base[0]:.5f}; {curve}")


def test_3_sysid_recovery(criteria):
    body = BodyModel.square()
    truth = ContactParams(0.3, 0.6)
    rng = np.random.default_rng(0)
    data = []
    for _ in range(40):
        s = State(0, rng.uniform(0.1, 0.3), rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1),
                  rng.uniform(-1, 0.5), rng.uniform(-15, 15))
        data.append(simulate(s, body, truth, 151, 0.004)[0])
    t0 = time.perf_counter()
    chain = metropolis_hastings(data, body, MhConfig(n_samples=3000, burn_in=1000,
                                                     proposal_sigma=0.05))
    elapsed = time.perf_counter() - t0
    est = chain_point_estimate(chain)
    ok = abs(est.mu - 0.3) <= 0.05 and abs(est.eps - 0.6) <= 0.05 and elapsed <= 300
    record(criteria, 3, ok, f"median mu={est.mu:.4f} eps={est.eps:.4f} (truth 0.3, 0.6, "
                            f"tol 0.05) in {elapsed:.0f} s")


def grid_objective(A, b, mu, p_max, n=2000):
    """Smallest ``|b - A p|`` over an n x n grid of the truncated friction cone."""
    pn = np.linspace(0.0, p_max, n)
    frac = np.linspace(-1.0, 1.0, n)
    best = np.inf
    for chunk in np.array_split(np.arange(n), 8):
        PN = pn[chunk, None]
        PT = mu * PN * frac[None, :]
        r0 = b[0] - A[0, 0] * PT - A[0, 1] * PN
        r1 = b[1] - A[1, 0] * PT - A[1, 1] * PN
        best = min(best, float(np.sqrt(np.min(r0 * r0 + r1 * r1))))
    return best


def test_4_optimal_impulse_matches_grid(criteria):
    rng = np.random.default_rng(4)
    worst_gap, worst_excess, cone_ok, n = 0.0, -np.inf, True, 0
    while n < 1000:
        body = BodyModel(rng.uniform(0.01, 1.0), rng.uniform(1e-5, 1e-2),
                         BodyModel.square().vertices)
        s = State(0, 0, 0, 0, 0, 0)
        J = contact_jacobian(s, contact_at(s, rng.uniform(-0.05, 0.05, 2)))
        dv = rng.normal(0, 2, 2)
        fdt = rng.normal(0, 1e-3, 3)
        mu = rng.uniform(0.05, 1.5)
        A = J @ body.inv_mass_matrix @ J.T
        b = dv - J @ body.inv_mass_matrix @ fdt
        free = np.linalg.solve(A, b)
        if free[1] >= 0 and abs(free[0]) <= mu * free[1]:
            continue                     # only instances where the cone is active
        n += 1
        p = optimal_impulse(dv, J, body, fdt, mu)
        cone_ok &= p.p_n >= 0 and abs(p.p_t) <= mu * p.p_n
        f = float(np.linalg.norm(b - A @ p.as_array()))
        p_max = 2 * np.linalg.norm(b) / np.linalg.svd(A, compute_uv=False)[-1]
        g = grid_objective(A, b, mu, p_max)
        cell = np.linalg.norm(A, 2) * np.hypot(p_max, 2 * mu * p_max) / 1999
        worst_gap = max(worst_gap, (g - f) / cell)
        worst_excess = max(worst_excess, (f - g) / max(g, 1e-300))
    ok = cone_ok and worst_gap <= 2 and worst_excess <= 1e-12
    record(criteria, 4, ok, f"1000 active-cone instances: worst grid gap {worst_gap:.3f} cells "
                            f"(need <= 2), closed form never worse than grid "
                            f"(max rel excess {worst_excess:.1e}), cone exact: {cone_ok}")


def test_5_push_through_matches_monte_carlo(criteria):
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(100):
        body = BodyModel(rng.uniform(0.01, 1.0), rng.uniform(1e-5, 1e-2),
                         BodyModel.square().vertices)
        s = State(0, 0, rng.uniform(-np.pi, np.pi), 0, -1, 0)
        J = contact_jacobian(s, contact_at(s, rng.uniform(-0.05, 0.05, 2)))
        L = rng.normal(size=(2, 2))
        cov_res = L @ L.T + 0.05 * np.eye(2)
        _, cov = push_impulse_uncertainty(s, body, J, Impulse(0, 0),
                                          ImpulseDistribution(np.zeros(2), cov_res))
        p = np.random.default_rng([5, k]).multivariate_normal(np.zeros(2), cov_res, 1_000_000)
        dv = p @ (body.inv_mass_matrix @ J.T).T
        mc = np.cov(dv.T)
        worst = max(worst, np.linalg.norm(cov[3:, 3:] - mc) / np.linalg.norm(mc))
    record(criteria, 5, worst < 0.02, f"worst Frobenius relative error {100 * worst:.3f}% "
                                      f"over 100 configurations (need < 2%)")


def test_6_feasibility_filter(pipeline, criteria):
    res, _ = pipeline
    body = BodyModel.square()
    policy = res.policies[0].policy
    steps = predict(GaussianMixture.single(DROP, DROP_COV), body, res.contact_params, policy,
                    n_events=10, m_samples=50, seed=0)
    fractions = [r.discarded_fraction for r in steps]
    feasible = all(feasibility_filter(State.from_array(m), e, body)
                   for r in steps for m, e in zip(r.belief.means, r.pre_event_energy))
    ok = len(steps) == 10 and feasible and max(fractions) < 0.2
    record(criteria, 6, ok, f"{len(steps)} events, all means feasible: {feasible}; discarded "
                            f"fraction per event {[round(f, 3) for f in fractions]} (need < 0.2)")


def test_7_uncertainty_grows_at_contact(pipeline, criteria):
    res, _ = pipeline
    body = BodyModel.square()
    policy = res.policies[0].policy
    failures = []
    for seed in range(10):
        b0 = GaussianMixture.single(DROP, DROP_COV)
        steps = predict(b0, body, res.contact_params, policy, n_events=2, m_samples=50, seed=seed)
        traces = [b0.trace()] + [r.belief.trace() for r in steps]
        if len(traces) < 3 or not (traces[0] < traces[1] < traces[2]):
            failures.append((seed, traces))
    record(criteria, 7, not failures, f"trace increased over both events for "
                                      f"{10 - len(failures)}/10 seeds {failures or ''}")


def test_8_determinism_and_conservation(criteria):
    body = BodyModel.square()
    rng = np.random.default_rng(8)
    # free flight
    drift = 0.0
    for _ in range(200):
        s = State(0, rng.uniform(1, 10), rng.uniform(-3, 3), *rng.normal(0, 3, 3))
        e0 = total_energy(s, body)
        for dt in (0.004, 0.1, 0.5):
            drift = max(drift, abs(total_energy(integrate_free_flight(s, body, dt), body) - e0))
    # contact never adds kinetic energy
    params_rng = np.random.default_rng(80)
    gain = -np.inf
    for _ in range(10_000):
        s, c = random_impact(rng, body)
        params = ContactParams(params_rng.uniform(0, 2), params_rng.uniform(0, 1))
        post = apply_impulse(s, body, contact_jacobian(s, c), resolve_contact(s, body, c, params))
        ke = kinetic_energy(s, body)
        gain = max(gain, (kinetic_energy(post, body) - ke) / ke)
    # stochastic stages, each run twice
    params = ContactParams(0.3, 0.6)

    def stages():
        ds = generate_oracle_dataset(OracleConfig(n_trajectories=6, seed=11), body)
        chain = metropolis_hastings(ds.trajectories, body, MhConfig(n_samples=60, burn_in=10))
        tr = train(ds.trajectories, body, params, RolloutConfig(samples_per_loss=2, seed=3),
                   TrainConfig(max_iter=3))
        dist = policy_eval(tr.policy, np.array([1.0, 0.1, 1.0, 0.2, -1.0]))
        draw = np.array([sample_residual(dist, k).as_array() for k in range(10)])
        roll, _ = simulate(State.from_array(DROP), body, params, 100, 0.004, policy=tr.policy,
                           seed=9)
        bel = predict(GaussianMixture.single(DROP, DROP_COV), body, params, tr.policy, 3,
                      m_samples=10, seed=2)
        return [t.data for t in ds.trajectories] + [chain.samples, tr.policy.theta, draw,
                                                    roll.data] + \
            [np.concatenate([r.belief.means.ravel(), r.belief.covs.ravel()]) for r in bel]

    same = all(np.array_equal(a, b) for a, b in zip(stages(), stages()))
    # a relative gain at round-off level is evaluation noise, not energy creation
    ok = drift <= 1e-10 and gain <= 1e-12 and same
    record(criteria, 8, ok, f"free-flight energy drift {drift:.1e} J (need <= 1e-10); max relative "
                            f"KE change over 10000 impacts {gain:.1e} (round-off bound 1e-12); bit-reproducible: {same}")
