import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from residual_contact.dynamics import (BodyModel, State, Trajectory, contact_jacobian,
                                       detect_contact, integrate_free_flight, total_energy,
                                       vertex_positions)
from residual_contact.errors import CorruptStateError, ValidationError

from conftest import contact_at

finite = st.floats(-5, 5, allow_nan=False)
states = st.builds(lambda *a: State(*a), finite, st.floats(0, 2), finite, finite, finite,
                   st.floats(-30, 30))


def test_body_validation():
    with pytest.raises(ValidationError):
        BodyModel(0.0, 1.0, np.array([[1, 0], [0, 1], [-1, -1]]))
    with pytest.raises(ValidationError):   # clockwise
        BodyModel(1.0, 1.0, np.array([[1, 0], [-1, -1], [0, 1]]))
    with pytest.raises(ValidationError):   # COM outside
        BodyModel(1.0, 1.0, np.array([[1, 1], [2, 1], [2, 2]]))


def test_square_defaults(square):
    assert square.mass == 0.049
    assert math.isclose(square.inertia, 0.049 * 0.05 ** 2 / 6, rel_tol=1e-12)
    assert math.isclose(square.radius_of_gyration, math.sqrt(square.inertia / square.mass),
                        rel_tol=1e-12)
    assert round(square.radius_of_gyration, 4) == 0.0204


def test_body_json_round_trip(square, tmp_path):
    square.save(tmp_path / "body.json")
    assert set(json.loads((tmp_path / "body.json").read_text())) >= {"mass", "inertia",
                                                                    "vertices", "gravity"}
    assert BodyModel.load(tmp_path / "body.json") == square


def test_free_fall_from_rest(square):
    s = integrate_free_flight(State(0, 0, 0, 0, 0, 0), square, 0.1)
    assert s.z == pytest.approx(-0.04905, abs=1e-15)
    assert s.vz == pytest.approx(-0.981, abs=1e-15)


def test_rotation_at_sample_rate(square):
    s = integrate_free_flight(State(0, 1, 0.3, 0, 0, 1.0), square, 0.004)
    assert s.theta - 0.3 == pytest.approx(0.004, abs=1e-15)


def test_zero_dt_is_identity(square):
    s0 = State(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    s = integrate_free_flight(s0, square, 0.0)
    assert np.array_equal(s.as_array(), s0.as_array())


def test_non_finite_state_rejected(square):
    with pytest.raises(CorruptStateError):
        integrate_free_flight(State(0, float("nan"), 0, 0, 0, 0), square, 0.01)


@given(states, st.floats(0, 1))
def test_free_flight_conserves_energy_and_momentum(s, dt):
    body = BodyModel.square()
    s1 = integrate_free_flight(s, body, dt)
    assert abs(total_energy(s1, body) - total_energy(s, body)) < 1e-10
    assert body.mass * s1.vx == body.mass * s.vx


def test_contact_resting_flat(square):
    c = detect_contact(State(0, 0.025, 0, 0, 0, 0), square)
    assert c is not None
    assert abs(c.penetration_depth) < 1e-15
    assert c.point[1] == pytest.approx(0.0, abs=1e-15)
    assert np.linalg.norm(c.normal) == 1.0


def test_no_contact_high_up(square):
    assert detect_contact(State(0, 1.0, 0, 0, 0, 0), square) is None


def test_corner_down_penetration(square):
    c = detect_contact(State(0, 0.03, math.pi / 4, 0, 0, 0), square)
    # oracle: half-diagonal minus COM height
    assert c.penetration_depth == pytest.approx(0.025 * math.sqrt(2) - 0.03, abs=1e-12)
    assert c.penetration_depth == pytest.approx(0.00536, abs=1e-5)


def test_detect_contact_matches_brute_force(square):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s = State(rng.uniform(-1, 1), rng.uniform(-0.03, 0.05), rng.uniform(-4, 4), 0, 0, 0)
        pts = vertex_positions(s, square)
        k = int(np.argmin(pts[:, 1]))
        c = detect_contact(s, square)
        if pts[k, 1] > 1e-4:
            assert c is None
        else:
            assert c.penetration_depth == pytest.approx(-pts[k, 1], abs=1e-14)
            assert np.allclose(c.point, pts[k], atol=1e-14)


def test_jacobian_through_com():
    s = State(0, 0, 0, 0, 0, 0)
    assert np.array_equal(contact_jacobian(s, contact_at(s, (0, 0))),
                          [[1, 0, 0], [0, 1, 0]])


def test_jacobian_rotation_only():
    s = State(0, 0, 0, 0, 0, 1.0)
    J = contact_jacobian(s, contact_at(s, (0.025, -0.025)))
    assert np.allclose(J @ s.v, [0.025, 0.025], atol=1e-15)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_jacobian_pure_translation(rx, rz):
    s = State(0, 0, 0, 1, 0, 0)
    assert np.array_equal(contact_jacobian(s, contact_at(s, (rx, rz))) @ s.v, [1.0, 0.0])


@given(states)
def test_jacobian_matches_finite_difference(s):
    body = BodyModel.square()
    k = 2
    h = 1e-6

    def vertex(t):
        return vertex_positions(integrate_free_flight(s, body, t), body)[k]

    # central difference around t=h to stay within the closed form's domain
    s_mid = integrate_free_flight(s, body, h)
    fd = (vertex(2 * h) - vertex(0.0)) / (2 * h)
    r = vertex_positions(s_mid, body)[k] - np.array([s_mid.x, s_mid.z])
    J = contact_jacobian(s_mid, contact_at(s_mid, r))
    assert np.allclose(J @ s_mid.v, fd, atol=1e-6)


def test_total_energy_examples(square):
    assert total_energy(State(0, 0, 0, 0, 0, 0), square) == 0.0
    assert total_energy(State(0, 0, 0, 0, -1, 0), square) == pytest.approx(0.0245, abs=1e-15)


def test_trajectory_spacing():
    data = np.zeros((3, 7))
    data[:, 0] = [0, 0.004, 0.008]
    Trajectory(0.004, data)
    data[2, 0] = 0.0081
    with pytest.raises(ValidationError):
        Trajectory(0.004, data)
