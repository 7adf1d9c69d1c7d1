import numpy as np
import pytest
from hypothesis import settings

from residual_contact.dynamics import BodyModel, ContactInfo, State

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


@pytest.fixture
def square():
    return BodyModel.square()


@pytest.fixture
def unit_body():
    """m = I = 1 with a small triangle, for the hand-worked identity cases."""
    return BodyModel(1.0, 1.0, np.array([[0.5, -0.5], [0.5, 0.5], [-0.5, 0.0]]))


def contact_at(state, r):
    """ContactInfo for a contact point at world offset ``r`` from the COM."""
    r = np.asarray(r, float)
    return ContactInfo(point=np.array([state.x, state.z]) + r, normal=np.array([0.0, 1.0]),
                       penetration_depth=0.0, vertex_index=0)


def random_impact(rng, body):
    """A random pose touching the ground at its lowest vertex, approaching it."""
    from residual_contact import _kernels as K
    while True:
        s = np.array([rng.uniform(-1, 1), 0.0, rng.uniform(-np.pi, np.pi),
                      rng.uniform(-2, 2), rng.uniform(-3, 0.5), rng.uniform(-30, 30)])
        i, z = K.lowest_vertex(s, body.vertices)
        s[1] -= z
        rx, rz = K.vertex_offset(s[2], body.vertices, i)
        _, vn = K.contact_velocity(s, rx, rz)
        if vn < -1e-3:
            st = State.from_array(s)
            return st, contact_at(st, (rx, rz))


_CRITERIA = {}


@pytest.fixture(scope="session")
def criteria():
    """Acceptance outcomes, printed one line each at the end of the run."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
