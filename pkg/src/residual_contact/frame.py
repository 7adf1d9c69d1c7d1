"""Contact-frame quantities: effective inertia, invariant features, optimal impulse."""
from __future__ import annotations

import numpy as np

from .analytic import Impulse
from .dynamics import BodyModel, ContactInfo, State, contact_jacobian
from .errors import DegenerateContactError

FEATURE_NAMES = ("Mc00", "Mc01", "Mc11", "v_t", "v_n")


def effective_inertia(J: np.ndarray, body: BodyModel) -> np.ndarray:
    """``M_c = (J M^-1 J^T)^-1``, the inertia felt at the contact point."""
    A = J @ body.inv_mass_matrix @ J.T
    if np.linalg.cond(A) >= 1e12:
        raise DegenerateContactError("contact-frame projection of the inertia is singular")
    Mc = np.linalg.inv(A)
    return 0.5 * (Mc + Mc.T)


def contact_frame(state: State, body: BodyModel, contact: ContactInfo):
    """``(J, M_c, v_c)`` for a contact."""
    J = contact_jacobian(state, contact)
    return J, effective_inertia(J, body), J @ state.v


def features(state: State, body: BodyModel, contact: ContactInfo) -> np.ndarray:
    """5-vector ``(Mc00, Mc01, Mc11, v_t, v_n)``."""
    _, Mc, vc = contact_frame(state, body, contact)
    return np.array([Mc[0, 0], Mc[0, 1], Mc[1, 1], vc[0], vc[1]])


def impulse_objective(p, dv_c, J, body, f_ext_dt) -> float:
    A = J @ body.inv_mass_matrix @ J.T
    b = np.asarray(dv_c, float) - J @ body.inv_mass_matrix @ np.asarray(f_ext_dt, float)
    return float(np.linalg.norm(b - A @ np.asarray(p, float)))


def optimal_impulse(dv_c, J: np.ndarray, body: BodyModel, f_ext_dt, mu: float) -> Impulse:
    """Impulse in the friction cone that best explains a contact velocity change.

    Minimizes ``|dv_c - J M^-1 f_ext dt - M_c^-1 p|`` over ``p_n >= 0`` and
    ``|p_t| <= mu p_n`` by enumerating the interior optimum, both cone edges
    and the apex.
    """
    Minv = body.inv_mass_matrix
    A = J @ Minv @ J.T
    b = np.asarray(dv_c, float) - J @ Minv @ np.asarray(f_ext_dt, float)

    p_free = np.linalg.solve(A, b)
    if p_free[1] >= 0 and abs(p_free[0]) <= mu * p_free[1]:
        return Impulse(float(p_free[0]), float(p_free[1]), "interior")

    best = (float(b @ b), 0.0, 0.0, "apex")
    for sign in (1.0, -1.0):
        u = np.array([sign * mu, 1.0])
        Au = A @ u
        s = max(0.0, float(Au @ b) / float(Au @ Au))
        pn = s
        pt = sign * mu * pn
        r = b - A @ np.array([pt, pn])
        val = float(r @ r)
        if val < best[0]:
            best = (val, pt, pn, "edge")
    return Impulse(best[1], best[2], best[3])
