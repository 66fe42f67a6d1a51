"""Target, birth, motion and sensor models shared by the filter, planner and simulator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np


def symmetrise(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


@dataclass(frozen=True)
class Bernoulli:
    """A potential target: existence probability plus Gaussian state density."""

    r: float
    mean: np.ndarray
    cov: np.ndarray
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if not (-1e-12 <= self.r <= 1 + 1e-12):
            raise ValueError(f"existence probability out of range: {self.r}")
        object.__setattr__(self, "r", float(min(max(self.r, 0.0), 1.0)))

    def with_(self, **changes) -> "Bernoulli":
        return replace(self, **changes)


@dataclass(frozen=True)
class MultiBernoulli:
    components: Tuple[Bernoulli, ...] = ()
    time_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        ids = [b.id for b in self.components]
        if len(set(ids)) != len(ids):
            raise ValueError("component ids must be unique")

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @property
    def next_id(self) -> int:
        return max((b.id for b in self.components), default=-1) + 1

    def to_dict(self) -> dict:
        return {
            "time_index": self.time_index,
            "components": [
                {"id": b.id, "r": b.r, "mean": b.mean.tolist(), "cov": b.cov.tolist()}
                for b in self.components
            ],
        }


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    Q: np.ndarray
    p_survival: float = 0.99

    @classmethod
    def constant_velocity(cls, q: float, tau: float = 1.0, p_survival: float = 0.99):
        """Nearly constant velocity model for state ``[px, vx, py, vy]``."""
        F1 = np.array([[1.0, tau], [0.0, 1.0]])
        Q1 = np.array([[tau**3 / 3, tau**2 / 2], [tau**2 / 2, tau]])
        return cls(np.kron(np.eye(2), F1), q * np.kron(np.eye(2), Q1), p_survival)


@dataclass(frozen=True)
class BirthModel:
    """Multi-Bernoulli birth: a tuple of ``(r_birth, mean, cov)``."""

    components: Tuple[Tuple[float, np.ndarray, np.ndarray], ...] = ()

    def __post_init__(self):
        comps = []
        for r, m, P in self.components:
            if not 0 < r < 1:
                raise ValueError(f"birth probability must lie in (0, 1), got {r}")
            comps.append((float(r), np.asarray(m, dtype=float), np.asarray(P, dtype=float)))
        object.__setattr__(self, "components", tuple(comps))


POSITION_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class SensorModel:
    """Linear-Gaussian sensor with range-decaying detection and disc clutter.

    With ``distance_decay=False`` the detection probability is the constant
    ``p_d_max`` everywhere.
    """

    H: np.ndarray = field(default_factory=lambda: POSITION_H.copy())
    R: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(2))
    p_d_max: float = 0.999
    fov_radius: float = 40.0
    clutter_rate: float = 0.1
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    distance_decay: bool = True

    def __post_init__(self):
        if not 0 < self.p_d_max <= 1:
            raise ValueError("p_d_max must lie in (0, 1]")
        if self.clutter_rate < 0 or self.fov_radius <= 0:
            raise ValueError("clutter rate must be >= 0 and FOV radius > 0")

    def detection_probability(self, sensor_pos, positions) -> np.ndarray:
        """Detection probability for 2-D target position(s)."""
        if not self.distance_decay:
            return np.full(np.shape(positions)[:-1], self.p_d_max)
        d2 = np.sum((np.asarray(positions) - np.asarray(sensor_pos)) ** 2, axis=-1)
        return self.p_d_max * np.exp(-0.5 * d2 / self.fov_radius**2)

    def expected_detection_probability(self, sensor_pos, mean, cov, mode: str = "mean"):
        """Expected detection probability of a Gaussian target.

        ``mode="mean"`` evaluates at the predicted mean; ``mode="exact"`` is the
        closed-form Gaussian expectation of the decaying detection profile.
        Broadcasts over leading axes of ``mean`` (…, n) and ``cov`` (…, n, n).
        """
        mean = np.asarray(mean, dtype=float)
        pos = mean @ self.H.T
        if mode == "mean" or not self.distance_decay:
            return self.detection_probability(sensor_pos, pos)
        if mode != "exact":
            raise ValueError(f"unknown detection mode {mode!r}")
        Pz = self.H @ np.asarray(cov) @ self.H.T
        A = Pz + self.fov_radius**2 * np.eye(2)
        diff = pos - np.asarray(sensor_pos)
        quad = np.einsum("...i,...ij,...j->...", diff, np.linalg.inv(A), diff)
        scale = self.fov_radius**2 / np.sqrt(np.linalg.det(A))
        return self.p_d_max * scale * np.exp(-0.5 * quad)

    def clutter_intensity(self, sensor_pos, z) -> np.ndarray:
        """PPP clutter intensity: uniform on the FOV disc, zero outside."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        inside = np.sum((z - np.asarray(sensor_pos)) ** 2, axis=-1) <= self.fov_radius**2
        density = self.clutter_rate / (np.pi * self.fov_radius**2)
        return np.where(inside, density, 0.0)
