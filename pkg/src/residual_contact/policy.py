"""Stochastic residual policy: a small density network over corrective impulses."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .analytic import Impulse
from .errors import NumericalError, ValidationError

FORMAT_VERSION = 2        # 2: outputs scaled by stopping momentum
DEFAULT_LAYERS = (5, 16, 16, 5)
SIGMA_MIN = 1e-4          # N s, per-axis floor on the impulse std
SIGMA_SCALE = 1e-3        # std at zero log-sigma output, per unit stopping momentum
IMPULSE_SCALE = 0.15      # mean per unit output, per unit stopping momentum
INIT_STD = 0.1


def parameter_count(layer_sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass
class PolicyParams:
    theta: np.ndarray
    layer_sizes: tuple = DEFAULT_LAYERS
    feature_shift: np.ndarray = field(default_factory=lambda: np.zeros(5))
    feature_scale: np.ndarray = field(default_factory=lambda: np.ones(5))
    impulse_scale: float = IMPULSE_SCALE
    sigma_scale: float = SIGMA_SCALE
    sigma_min: float = SIGMA_MIN

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        self.theta = np.ascontiguousarray(self.theta, dtype=float)
        self.feature_shift = np.ascontiguousarray(self.feature_shift, dtype=float)
        self.feature_scale = np.ascontiguousarray(self.feature_scale, dtype=float)
        if self.layer_sizes[0] != 5 or self.layer_sizes[-1] != 5:
            raise ValidationError("policy network must map 5 features to 5 outputs")
        if self.theta.shape != (parameter_count(self.layer_sizes),):
            raise ValidationError(
                f"theta has {self.theta.size} entries, architecture {self.layer_sizes} "
                f"needs {parameter_count(self.layer_sizes)}")
        if self.feature_shift.shape != (5,) or self.feature_scale.shape != (5,):
            raise ValidationError("feature normalization must have 5 entries")
        if np.any(self.feature_scale <= 0):
            raise ValidationError("feature scales must be positive")

    @property
    def sizes_array(self) -> np.ndarray:
        return np.array(self.layer_sizes, dtype=np.int64)

    @classmethod
    def zeros(cls, layer_sizes=DEFAULT_LAYERS, **kw) -> "PolicyParams":
        return cls(np.zeros(parameter_count(layer_sizes)), layer_sizes, **kw)

    @classmethod
    def random(cls, seed: int, std: float = INIT_STD, layer_sizes=DEFAULT_LAYERS, **kw):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, std, parameter_count(layer_sizes)), layer_sizes, **kw)

    def with_theta(self, theta) -> "PolicyParams":
        return PolicyParams(np.array(theta, dtype=float), self.layer_sizes, self.feature_shift,
                            self.feature_scale, self.impulse_scale, self.sigma_scale,
                            self.sigma_min)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "theta": self.theta.tolist(),
            "feature_norm": [[float(a), float(b)]
                             for a, b in zip(self.feature_shift, self.feature_scale)],
            "impulse_scale": self.impulse_scale,
            "sigma_scale": self.sigma_scale,
            "sigma_min": self.sigma_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyParams":
        version = d.get("version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ValidationError(f"policy format version {version} is not supported")
        try:
            norm = np.asarray(d["feature_norm"], dtype=float)
            return cls(np.asarray(d["theta"], dtype=float), tuple(d["layer_sizes"]),
                       norm[:, 0], norm[:, 1],
                       float(d.get("impulse_scale", IMPULSE_SCALE)),
                       float(d.get("sigma_scale", SIGMA_SCALE)),
                       float(d.get("sigma_min", SIGMA_MIN)))
        except (KeyError, IndexError) as exc:
            raise ValidationError(f"malformed policy document: {exc}") from None

    def save(self, path, **metadata) -> None:
        doc = self.to_dict()
        if metadata:
            doc["metadata"] = metadata
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "PolicyParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ImpulseDistribution:
    mean: np.ndarray
    cov: np.ndarray


def raw_output(params: PolicyParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xn = (x - params.feature_shift) / params.feature_scale
    out = np.empty(params.layer_sizes[-1])
    K.policy_forward(params.theta, params.sizes_array, xn, out)
    return out


def policy_eval(params: PolicyParams, x) -> ImpulseDistribution:
    """Gaussian over the corrective impulse for contact features ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (5,) or not np.all(np.isfinite(x)):
        raise ValidationError("features must be a finite 5-vector")
    out = raw_output(params, x)
    mt, mn, c00, c01, c11 = K.distribution_from_output(
        out, params.impulse_scale, params.sigma_scale, params.sigma_min,
        K.stopping_momentum(*x))
    return ImpulseDistribution(np.array([mt, mn]), np.array([[c00, c01], [c01, c11]]))


def sample_residual(dist: ImpulseDistribution, rng_seed: int,
                    sigma_min: Optional[float] = SIGMA_MIN) -> Impulse:
    """``mean + L z`` with ``L`` the Cholesky factor of the covariance."""
    cov = np.asarray(dist.cov, dtype=float)
    floor = 0.0 if sigma_min is None else sigma_min ** 2
    if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < floor * (1 - 1e-9):
        raise NumericalError("residual covariance is not positive definite above the floor")
    L = np.linalg.cholesky(cov)
    z = np.random.default_rng(rng_seed).standard_normal(2)
    p = np.asarray(dist.mean) + L @ z
    return Impulse(float(p[0]), float(p[1]))
