"""Ground-truth scenario engine: targets, sensor kinematics, obstacles, measurements."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .models import BirthModel, MotionModel, SensorModel

N_ACTIONS = 7
HOLD = 6

# Unit moves at 60 degree steps, with exact zeros where cos/sin vanish.
_HEX = np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2], [-0.5, np.sqrt(3) / 2],
                 [-1.0, 0.0], [-0.5, -np.sqrt(3) / 2], [0.5, -np.sqrt(3) / 2]])


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate obstacle {self}")

    def contains(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def intersects_segment(self, a, b) -> bool:
        """Liang-Barsky clip of segment ``a -> b`` against the closed rectangle."""
        a = np.asarray(a, dtype=float)
        d = np.asarray(b, dtype=float) - a
        t0, t1 = 0.0, 1.0
        for p, q in (
            (-d[0], a[0] - self.xmin),
            (d[0], self.xmax - a[0]),
            (-d[1], a[1] - self.ymin),
            (d[1], self.ymax - a[1]),
        ):
            if p == 0:
                if q < 0:
                    return False
            else:
                t = q / p
                if p < 0:
                    t0 = max(t0, t)
                else:
                    t1 = min(t1, t)
                if t0 > t1:
                    return False
        return True


@dataclass(frozen=True)
class ActionSpace:
    """Six moves on a hexagon of radius ``step`` plus hold (index 6)."""

    step: float = 15.0

    def displacement(self, action: int) -> np.ndarray:
        if action == HOLD:
            return np.zeros(2)
        if not 0 <= action < HOLD:
            raise ValueError(f"invalid action index {action}")
        return self.step * _HEX[action]


def apply_action(pose, action: int, step: float = 15.0) -> np.ndarray:
    return np.asarray(pose, dtype=float) + ActionSpace(step).displacement(action)


def action_feasible(pose, target, obstacles: Sequence[Obstacle], extent: float) -> bool:
    half = extent / 2.0
    if np.any(np.abs(target) > half):
        return False
    return not any(o.contains(target) or o.intersects_segment(pose, target) for o in obstacles)


def available_actions(pose, obstacles: Sequence[Obstacle] = (), extent: float = 500.0,
                      step: float = 15.0) -> List[int]:
    """Action indices whose straight move stays clear of obstacles and inside the square.

    The surveillance square is ``[-extent/2, extent/2]^2``. Hold is always
    available.
    """
    pose = np.asarray(pose, dtype=float)
    space = ActionSpace(step)
    acts = [a for a in range(HOLD) if action_feasible(pose, pose + space.displacement(a), obstacles, extent)]
    return acts + [HOLD]


def checked_apply_action(pose, action, obstacles=(), extent=500.0, step=15.0) -> np.ndarray:
    if action not in available_actions(pose, obstacles, extent, step):
        raise ValueError(f"action {action} is not available at {tuple(np.round(pose, 3))}")
    return apply_action(pose, action, step)


def detection_probability(sensor_pos, target_position, p_d_max=0.999, fov_radius=40.0) -> float:
    d2 = float(np.sum((np.asarray(target_position) - np.asarray(sensor_pos)) ** 2))
    return p_d_max * float(np.exp(-0.5 * d2 / fov_radius**2))


# --------------------------------------------------------------------------- targets


@dataclass
class GroundTruthTarget:
    id: int
    state: np.ndarray
    birth_step: int
    death_step: Optional[int] = None  # exclusive; None = not yet dead

    def alive(self, step: int) -> bool:
        return self.birth_step <= step and (self.death_step is None or step < self.death_step)


def step_ground_truth(targets: List[GroundTruthTarget], motion: MotionModel, birth: BirthModel,
                      rng: np.random.Generator, step: int) -> List[GroundTruthTarget]:
    """Advance stochastic ground truth to ``step``: survival, NCV motion, births."""
    out = []
    next_id = max((t.id for t in targets), default=-1) + 1
    for t in targets:
        if t.death_step is not None and t.death_step <= step:
            out.append(t)
            continue
        if rng.random() >= motion.p_survival:
            out.append(GroundTruthTarget(t.id, t.state, t.birth_step, step))
            continue
        w = rng.multivariate_normal(np.zeros(len(t.state)), motion.Q)
        out.append(GroundTruthTarget(t.id, motion.F @ t.state + w, t.birth_step, None))
    for r, m, P in birth.components:
        if rng.random() < r:
            out.append(GroundTruthTarget(next_id, rng.multivariate_normal(m, P), step, None))
            next_id += 1
    return out


def generate_measurements(sensor_pos, sensor: SensorModel, target_states: np.ndarray,
                          rng: np.random.Generator) -> np.ndarray:
    """Target detections plus uniform-disc PPP clutter, in random order."""
    X = np.asarray(target_states, dtype=float).reshape(-1, 4)
    zs = []
    if len(X):
        pd = sensor.detection_probability(sensor_pos, X @ sensor.H.T)
        hit = rng.random(len(X)) < pd
        for x in X[hit]:
            zs.append(rng.multivariate_normal(sensor.H @ x + sensor.bias, sensor.R))
    n_c = rng.poisson(sensor.clutter_rate) if sensor.clutter_rate > 0 else 0
    if n_c:
        rad = sensor.fov_radius * np.sqrt(rng.random(n_c))
        ang = 2 * np.pi * rng.random(n_c)
        zs.extend(np.asarray(sensor_pos) + np.c_[rad * np.cos(ang), rad * np.sin(ang)])
    Z = np.array(zs).reshape(-1, 2)
    return Z[rng.permutation(len(Z))]


# --------------------------------------------------------------------------- scenario


@dataclass(frozen=True)
class ScriptedTarget:
    birth_step: int
    death_step: int
    initial_state: Optional[Tuple[float, float, float, float]] = None


@dataclass
class Scenario:
    extent: float
    obstacles: Tuple[Obstacle, ...]
    motion: MotionModel
    birth: BirthModel
    sensor: SensorModel
    sensor_positions: np.ndarray
    steps: int
    seed: int = 0
    step_radius: float = 15.0
    mode: str = "scripted"
    scripted: Tuple[ScriptedTarget, ...] = ()
    truth_q: Optional[float] = None
    name: str = "scenario"

    def __post_init__(self):
        self.sensor_positions = np.asarray(self.sensor_positions, dtype=float).reshape(-1, 2)

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_positions)

    @property
    def birth_location(self) -> np.ndarray:
        return np.mean([m[[0, 2]] for _, m, _ in self.birth.components], axis=0)

    def check_blocked_path(self) -> List[int]:
        """Indices of sensors whose straight path to the birth location is NOT blocked."""
        goal = self.birth_location
        return [s for s, p in enumerate(self.sensor_positions)
                if not any(o.intersects_segment(p, goal) for o in self.obstacles)]

    def ground_truth(self, rng: Optional[np.random.Generator] = None) -> List[List[GroundTruthTarget]]:
        """Per-step list of live targets (index = step, starting at 1).

        Scripted mode is fully determined by the scenario seed; stochastic mode
        samples births/deaths from the models using ``rng``.
        """
        if self.mode == "scripted":
            return self._scripted_truth()
        if rng is None:
            rng = np.random.default_rng(self.seed)
        targets: List[GroundTruthTarget] = []
        out: List[List[GroundTruthTarget]] = [[]]
        for k in range(1, self.steps + 1):
            targets = step_ground_truth(targets, self.motion, self.birth, rng, k)
            out.append([t for t in targets if t.alive(k)])
        return out

    def _scripted_truth(self) -> List[List[GroundTruthTarget]]:
        rng = np.random.default_rng([self.seed, 7919])
        q = self.motion.Q if self.truth_q is None else MotionModel.constant_velocity(self.truth_q).Q
        _, bm, bP = self.birth.components[0]
        out: List[List[GroundTruthTarget]] = [[] for _ in range(self.steps + 1)]
        for tid, st in enumerate(self.scripted):
            x = np.asarray(st.initial_state, dtype=float) if st.initial_state is not None \
                else rng.multivariate_normal(bm, bP)
            for k in range(st.birth_step, min(st.death_step, self.steps + 1)):
                if k > st.birth_step:
                    x = self.motion.F @ x + rng.multivariate_normal(np.zeros(4), q)
                out[k].append(GroundTruthTarget(tid, x.copy(), st.birth_step, st.death_step))
        return out


def write_ground_truth_csv(path, truth: List[List[GroundTruthTarget]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "target_id", "px", "vx", "py", "vy"])
        for k, targets in enumerate(truth):
            for t in targets:
                w.writerow([k, t.id, *(f"{v:.6f}" for v in t.state)])
