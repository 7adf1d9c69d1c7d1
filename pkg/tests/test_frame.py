import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from residual_contact.analytic import Impulse
from residual_contact.dynamics import BodyModel, State, contact_jacobian, detect_contact
from residual_contact.errors import DegenerateContactError
from residual_contact.frame import effective_inertia, features, impulse_objective, optimal_impulse

from conftest import contact_at


def J_of(r):
    return np.array([[1.0, 0.0, -r[1]], [0.0, 1.0, r[0]]])


def test_through_com_is_identity(unit_body):
    assert np.allclose(effective_inertia(J_of((0, 0)), unit_body), np.eye(2), atol=1e-15)


@given(st.floats(-2, 2))
def test_closed_form_inverse(a):
    body = BodyModel(1.0, 1.0, np.array([[1, -1], [1, 1], [-1, 0.0]]))
    A = np.array([[1 + a * a, -a * a], [-a * a, 1 + a * a]])
    det = (1 + a * a) ** 2 - a ** 4
    expected = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
    assert np.allclose(effective_inertia(J_of((a, a)), body), expected, rtol=1e-12, atol=1e-14)


def test_mass_scaling_doubles_inertia(square):
    heavy = BodyModel(2 * square.mass, 2 * square.inertia, square.vertices)
    J = J_of((0.02, -0.01))
    assert np.allclose(effective_inertia(J, heavy), 2 * effective_inertia(J, square), rtol=1e-12)


def test_degenerate_projection(square):
    with pytest.raises(DegenerateContactError):
        effective_inertia(np.array([[1.0, 0, 0], [1.0, 0, 0]]), square)


def test_spd_on_random_configurations(square):
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        r = rng.uniform(-0.05, 0.05, 2)
        Mc = effective_inertia(J_of(r), square)
        assert np.array_equal(Mc, Mc.T)
        assert np.linalg.eigvalsh(Mc).min() > 0
        A = J_of(r) @ square.inv_mass_matrix @ J_of(r).T
        assert np.allclose(np.linalg.inv(Mc), A, rtol=1e-9)


def test_features_invariant_under_quarter_turn(square):
    for theta in (0.0, 0.3, -0.7):
        s0 = State(0, 0.03, theta, 0.4, -1.0, 2.0)
        s1 = State(0, 0.03, theta + math.pi / 2, 0.4, -1.0, 2.0)
        c0 = contact_at(s0, np.array(detect_contact(s0, square, tol=1.0).point) - [0, 0.03])
        c1 = contact_at(s1, np.array(detect_contact(s1, square, tol=1.0).point) - [0, 0.03])
        assert np.allclose(features(s0, square, c0), features(s1, square, c1), atol=1e-10)


def test_translation_and_rotation_give_same_contact_velocity(square):
    r = (0.025, -0.025)
    moving = State(0, 0.025, 0, 1.0, 0, 0)
    spinning = State(0, 0.025, 0, 0, 0, 1.0 / -r[1])   # -omega r_z = 1
    fa = features(moving, square, contact_at(moving, r))
    fb = features(spinning, square, contact_at(spinning, r))
    assert fa[3] == pytest.approx(fb[3], abs=1e-14)
    assert fa[3] == pytest.approx(1.0)


def test_zero_velocity_features(square):
    s = State(0, 0.025, 0, 0, 0, 0)
    f = features(s, square, contact_at(s, (0.025, -0.025)))
    assert f.shape == (5,)
    assert np.array_equal(f[3:], [0.0, 0.0])


def test_optimal_impulse_trivial(unit_body):
    p = optimal_impulse(np.zeros(2), J_of((0, 0)), unit_body, np.zeros(3), 0.5)
    assert (p.p_t, p.p_n) == (0.0, 0.0)
    p = optimal_impulse(np.array([0.0, 2.0]), J_of((0, 0)), unit_body, np.zeros(3), 0.3)
    assert (p.p_t, p.p_n) == pytest.approx((0.0, 2.0), abs=1e-15)
    assert p.mode == "interior"


def test_optimal_impulse_beats_random_feasible(square):
    rng = np.random.default_rng(3)
    for _ in range(200):
        J = J_of(rng.uniform(-0.035, 0.035, 2))
        dv = rng.normal(0, 2, 2)
        fdt = rng.normal(0, 1e-3, 3)
        mu = rng.uniform(0, 1.5)
        p = optimal_impulse(dv, J, square, fdt, mu)
        assert p.p_n >= 0 and abs(p.p_t) <= mu * p.p_n
        f = impulse_objective(p.as_array(), dv, J, square, fdt)
        assert f <= impulse_objective(np.zeros(2), dv, J, square, fdt) + 1e-15
        pn = rng.uniform(0, 0.2, 1000)
        pt = rng.uniform(-1, 1, 1000) * mu * pn
        others = [impulse_objective((a, b), dv, J, square, fdt) for a, b in zip(pt, pn)]
        assert f <= min(others) + 1e-12


def test_objective_at_impulse_consistent(square):
    J = J_of((0.01, -0.02))
    p = Impulse(0.001, 0.01)
    dv = J @ square.inv_mass_matrix @ J.T @ p.as_array()
    assert impulse_objective(p.as_array(), dv, J, square, np.zeros(3)) < 1e-15
