"""Trajectory datasets and their JSON-lines file format.

Each line of a ``.jsonl`` file is one trajectory::

    {"dt": 0.004, "states": [[t, x, z, theta, vx, vz, omega], ...]}

Dataset-level metadata (body, sample rate, provenance, generator settings)
lives in a sidecar ``<name>.meta.json`` next to the trajectory file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import BodyModel, Trajectory
from .errors import ValidationError

PROVENANCES = ("oracle", "analytical", "external")


@dataclass
class Dataset:
    trajectories: list
    body: BodyModel
    sample_rate: float
    provenance: str = "external"
    oracle_params: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trajectories:
            raise ValidationError("dataset contains no trajectories")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        dt = 1.0 / self.sample_rate
        for i, tr in enumerate(self.trajectories):
            if abs(tr.dt - dt) > 1e-12:
                raise ValidationError(
                    f"trajectory {i} has dt={tr.dt}, expected {dt} from the sample rate")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def __len__(self):
        return len(self.trajectories)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.trajectories[i] for i in indices], self.body, self.sample_rate,
                       self.provenance, self.oracle_params, dict(self.metadata))


def meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for tr in dataset.trajectories:
            fh.write(json.dumps({"dt": tr.dt, "states": tr.data.tolist()}))
            fh.write("\n")
    meta = {
        "body": dataset.body.to_dict(),
        "sample_rate": dataset.sample_rate,
        "provenance": dataset.provenance,
        "oracle_params": dataset.oracle_params,
        "metadata": dataset.metadata,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2))


def load_dataset(path, body: Optional[BodyModel] = None) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"dataset file {path} not found")
    trajectories = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                data = np.array(doc["states"], dtype=float)
                dt = float(doc["dt"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed trajectory record ({exc})") from None
            try:
                trajectories.append(Trajectory(dt, data))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if not trajectories:
        raise ValidationError(f"{path}: no trajectories")

    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
        return Dataset(trajectories, body or BodyModel.from_dict(meta["body"]),
                       float(meta["sample_rate"]), meta.get("provenance", "external"),
                       meta.get("oracle_params"), meta.get("metadata") or {})
    return Dataset(trajectories, body or BodyModel.square(), 1.0 / trajectories[0].dt)
