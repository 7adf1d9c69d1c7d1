"""Analytical impulse contact model: Newton restitution plus Coulomb friction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dynamics import BodyModel, ContactInfo, State, contact_jacobian, contact_offset
from .errors import NonImpactError, ValidationError

MODES = {K.STICK: "stick", K.SLIDE: "slide", K.STICK_CLAMPED: "stick_clamped",
         K.SLIDE_CLAMPED: "slide_clamped", K.FRICTIONLESS: "frictionless"}


@dataclass(frozen=True)
class ContactParams:
    mu: float
    eps: float

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValidationError(f"friction coefficient must be >= 0, got {self.mu}")
        if not 0 <= self.eps <= 1:
            raise ValidationError(f"restitution must lie in [0, 1], got {self.eps}")


@dataclass(frozen=True)
class Impulse:
    p_t: float
    p_n: float
    mode: str = ""

    def as_array(self) -> np.ndarray:
        return np.array([self.p_t, self.p_n])

    def __add__(self, other: "Impulse") -> "Impulse":
        return Impulse(self.p_t + other.p_t, self.p_n + other.p_n)


def resolve_contact(state: State, body: BodyModel, contact: ContactInfo,
                    params: ContactParams) -> Impulse:
    """Impulse of the analytical model for an approaching point contact.

    The sticking solution (zero tangential slip, normal velocity reversed by
    ``eps``) is used when it lies in the friction cone; otherwise the impulse
    sits on the cone edge opposing slip. Restitution is reduced when Newton's
    law would add kinetic energy, so the result never gains energy. ``mode``
    records which branch produced the impulse.
    """
    rx, rz = contact_offset(state, contact)
    vt, vn = K.contact_velocity(state.as_array(), rx, rz)
    if vn >= 0:
        raise NonImpactError(f"contact is not approaching (normal velocity {vn:.3g} m/s)")
    a00, a01, a11 = K.delassus(body.mass, body.inertia, rx, rz)
    pt, pn, mode = K.resolve_frame(vt, vn, a00, a01, a11, params.mu, params.eps)
    return Impulse(float(pt), float(pn), MODES[mode])


def apply_impulse(state: State, body: BodyModel, J: np.ndarray, p: Impulse,
                  f_ext_dt=(0.0, 0.0, 0.0)) -> State:
    """``v_post = v_pre + M^-1 (f_ext dt + J^T p)``; the configuration is unchanged."""
    dv = body.inv_mass_matrix @ (np.asarray(f_ext_dt, dtype=float) + np.asarray(J).T @ p.as_array())
    return state.with_velocity(state.v + dv)


def post_contact_velocity(state: State, contact: ContactInfo, post: State) -> np.ndarray:
    J = contact_jacobian(state, contact)
    return J @ post.v
