"""Planar rigid-body state, ballistic flight, ground contact and energy.

The body moves in the x-z plane and rotates by ``theta`` about the
out-of-plane axis. The ground is the halfplane ``z <= 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import CorruptStateError, ValidationError

CONTACT_TOL = K.CONTACT_TOL
DEFAULT_GRAVITY = 9.81


@dataclass(frozen=True)
class BodyModel:
    mass: float
    inertia: float
    vertices: np.ndarray
    gravity: float = DEFAULT_GRAVITY

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValidationError("vertices must be an (n, 2) array with n >= 3")
        if not (self.mass > 0 and self.inertia > 0):
            raise ValidationError("mass and inertia must be positive")
        # convex, counter-clockwise, containing the origin
        n = len(verts)
        for i in range(n):
            a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
            if _cross(b - a, c - b) <= 0:
                raise ValidationError("vertices must form a convex counter-clockwise polygon")
            if _cross(b - a, -a) <= 0:
                raise ValidationError("polygon must contain the center of mass")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @property
    def radius_of_gyration(self) -> float:
        return math.sqrt(self.inertia / self.mass)

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.diag([self.mass, self.mass, self.inertia])

    @property
    def inv_mass_matrix(self) -> np.ndarray:
        return np.diag([1.0 / self.mass, 1.0 / self.mass, 1.0 / self.inertia])

    @classmethod
    def square(cls, side: float = 0.05, mass: float = 0.049, gravity: float = DEFAULT_GRAVITY):
        """Uniform square with COM at the centre (inertia m s^2 / 6)."""
        h = side / 2
        verts = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
        return cls(mass=mass, inertia=mass * side ** 2 / 6, vertices=verts, gravity=gravity)

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "inertia": self.inertia,
            "vertices": self.vertices.tolist(),
            "gravity": self.gravity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyModel":
        try:
            return cls(mass=float(d["mass"]), inertia=float(d["inertia"]),
                       vertices=np.asarray(d["vertices"], dtype=float),
                       gravity=float(d.get("gravity", DEFAULT_GRAVITY)))
        except KeyError as exc:
            raise ValidationError(f"body document is missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "BodyModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other):
        if not isinstance(other, BodyModel):
            return NotImplemented
        return (self.mass == other.mass and self.inertia == other.inertia
                and self.gravity == other.gravity
                and np.array_equal(self.vertices, other.vertices))

    def __hash__(self):
        return hash((self.mass, self.inertia, self.gravity, self.vertices.tobytes()))


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class State:
    x: float = 0.0
    z: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vz: float = 0.0
    omega: float = 0.0
    t: float = 0.0

    @property
    def q(self) -> np.ndarray:
        return np.array([self.x, self.z, self.theta])

    @property
    def v(self) -> np.ndarray:
        return np.array([self.vx, self.vz, self.omega])

    def as_array(self) -> np.ndarray:
        """The 6-vector ``[x, z, theta, vx, vz, omega]``."""
        return np.array([self.x, self.z, self.theta, self.vx, self.vz, self.omega])

    @classmethod
    def from_array(cls, a: Sequence[float], t: float = 0.0) -> "State":
        return cls(*(float(c) for c in a[:6]), t=float(t))

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in (self.x, self.z, self.theta,
                                                self.vx, self.vz, self.omega, self.t))

    def with_velocity(self, v: Sequence[float]) -> "State":
        return State(self.x, self.z, self.theta, float(v[0]), float(v[1]), float(v[2]), self.t)


@dataclass
class Trajectory:
    """Uniformly sampled states stored as rows ``[t, x, z, theta, vx, vz, omega]``."""

    dt: float
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != 7:
            raise ValidationError("trajectory data must have shape (n, 7)")
        if len(self.data) == 0:
            raise ValidationError("trajectory is empty")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if len(self.data) > 1:
            gaps = np.diff(self.data[:, 0])
            if np.any(np.abs(gaps - self.dt) > 1e-9):
                raise ValidationError("timestamps are not spaced by dt")

    def __len__(self):
        return len(self.data)

    @property
    def states(self) -> list:
        return [State.from_array(row[1:], t=row[0]) for row in self.data]

    @property
    def configurations(self) -> np.ndarray:
        return self.data[:, 1:4]

    @property
    def state_array(self) -> np.ndarray:
        return self.data[:, 1:7]

    @classmethod
    def from_states(cls, states: Sequence[State], dt: float) -> "Trajectory":
        return cls(dt, np.array([[s.t, *s.as_array()] for s in states]))

    @classmethod
    def from_state_array(cls, arr: np.ndarray, dt: float, t0: float = 0.0) -> "Trajectory":
        n = len(arr)
        t = t0 + dt * np.arange(n)
        return cls(dt, np.column_stack([t, arr]))


@dataclass(frozen=True)
class ContactInfo:
    point: np.ndarray
    normal: np.ndarray
    penetration_depth: float
    vertex_index: int


def _check_finite(state: State):
    if not state.is_finite():
        raise CorruptStateError(f"non-finite state {state}")


def integrate_free_flight(state: State, body: BodyModel, dt: float) -> State:
    """Exact ballistic update over ``dt`` seconds."""
    _check_finite(state)
    if dt < 0:
        raise ValidationError("dt must be non-negative")
    out = np.empty(6)
    K.ballistic(state.as_array(), body.gravity, dt, out)
    return State.from_array(out, t=state.t + dt)


def vertex_positions(state: State, body: BodyModel) -> np.ndarray:
    c, s = math.cos(state.theta), math.sin(state.theta)
    rot = np.array([[c, -s], [s, c]])
    return body.vertices @ rot.T + np.array([state.x, state.z])


def detect_contact(state: State, body: BodyModel, tol: float = CONTACT_TOL) -> Optional[ContactInfo]:
    """Deepest vertex within ``tol`` of the ground, or None in free flight."""
    i, z = K.lowest_vertex(state.as_array(), body.vertices)
    if z > tol:
        return None
    rx, rz = K.vertex_offset(state.theta, body.vertices, i)
    point = np.array([state.x + rx, state.z + rz])
    return ContactInfo(point=point, normal=np.array([0.0, 1.0]),
                       penetration_depth=float(-z), vertex_index=int(i))


def contact_offset(state: State, contact: ContactInfo) -> np.ndarray:
    return np.asarray(contact.point) - np.array([state.x, state.z])


def contact_jacobian(state: State, contact: ContactInfo) -> np.ndarray:
    """2x3 map from body velocity to (tangential, normal) contact-point velocity."""
    rx, rz = contact_offset(state, contact)
    return np.array([[1.0, 0.0, -rz], [0.0, 1.0, rx]])


def kinetic_energy(state: State, body: BodyModel) -> float:
    return 0.5 * body.mass * (state.vx ** 2 + state.vz ** 2) + 0.5 * body.inertia * state.omega ** 2


def total_energy(state: State, body: BodyModel) -> float:
    return kinetic_energy(state, body) + body.mass * body.gravity * state.z
