"""YAML scenario / experiment configuration with file:line error reporting."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .models import BirthModel, MotionModel, SensorModel
from .planner import PlannerConfig
from .world import Obstacle, Scenario, ScriptedTarget

# Budgets and lookahead of the named algorithm variants.
ALGORITHM_PRESETS = {
    "myopic": dict(budget_joint=49, budget_individual=7, lookahead=1),
    "mcts1": dict(budget_joint=49, budget_individual=7, lookahead=5),
    "mcts2": dict(budget_joint=49, budget_individual=7, lookahead=10),
    "mcts3": dict(budget_joint=200, budget_individual=40, lookahead=5),
    "mcts4": dict(budget_joint=200, budget_individual=40, lookahead=10),
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


class _Doc:
    """Parsed YAML plus a key-path -> line number index."""

    def __init__(self, path: str):
        self.path = path
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path) from exc
        try:
            node = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {exc}", path, mark.line + 1 if mark else None) from exc
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a mapping", path, 1)
        self.lines: Dict[Tuple, int] = {}
        self._index(node, ())

    def _index(self, node, key):
        if node is None:
            return
        self.lines[key] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.lines[key + (k.value,)] = k.start_mark.line + 1
                self._index(v, key + (k.value,))
                self.lines[key + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._index(v, key + (i,))

    def error(self, key: Tuple, message: str) -> ConfigError:
        k = tuple(key)
        while k and k not in self.lines:
            k = k[:-1]
        label = ".".join(map(str, key))
        return ConfigError(f"{label}: {message}" if label else message, self.path, self.lines.get(k, 1))

    def get(self, key: Tuple, default=None, required=False):
        cur: Any = self.data
        for part in key:
            if isinstance(cur, dict) and part in cur:
                cur = cur[part]
            elif isinstance(cur, list) and isinstance(part, int) and part < len(cur):
                cur = cur[part]
            else:
                if required:
                    raise self.error(key, "missing required key")
                return default
        return cur

    def number(self, key, default=None, required=False, positive=False, lo=None, hi=None):
        v = self.get(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(key, f"expected a number, got {v!r}")
        if positive and not v > 0:
            raise self.error(key, f"must be positive, got {v}")
        if lo is not None and v < lo or hi is not None and v > hi:
            raise self.error(key, f"must lie in [{lo}, {hi}], got {v}")
        return v

    def vector(self, key, length, default=None, required=False):
        v = self.get(key, default, required)
        if v is None:
            return None
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise self.error(key, f"expected a list of {length} numbers")
        if arr.shape != (length,) or not np.all(np.isfinite(arr)):
            raise self.error(key, f"expected a list of {length} finite numbers, got {v!r}")
        return arr


def load_scenario(path: str) -> Scenario:
    doc = _Doc(path)
    extent = doc.number(("extent",), 500.0, positive=True)
    steps = int(doc.number(("steps",), 100, positive=True))
    q = doc.number(("motion", "q"), 0.8, positive=True)
    tau = doc.number(("motion", "tau"), 1.0, positive=True)
    ps = doc.number(("motion", "p_survival"), 0.99, lo=0.0, hi=1.0)
    if ps == 0:
        raise doc.error(("motion", "p_survival"), "must be > 0")
    motion = MotionModel.constant_velocity(q, tau, ps)

    births = doc.get(("birth",), required=True)
    if not isinstance(births, list) or not births:
        raise doc.error(("birth",), "expected a non-empty list of birth components")
    comps = []
    for i, _ in enumerate(births):
        r = doc.number(("birth", i, "r"), required=True)
        if not 0 < r < 1:
            raise doc.error(("birth", i, "r"), f"birth probability must lie in (0, 1), got {r}")
        mean = doc.vector(("birth", i, "mean"), 4, required=True)
        cov = np.diag(doc.vector(("birth", i, "cov_diag"), 4, required=True))
        if np.any(np.diag(cov) <= 0):
            raise doc.error(("birth", i, "cov_diag"), "variances must be positive")
        comps.append((r, mean, cov))
    birth = BirthModel(tuple(comps))

    sensor = SensorModel(
        R=np.diag(doc.vector(("sensor", "R_diag"), 2, [2.0, 2.0])),
        p_d_max=doc.number(("sensor", "p_d_max"), 0.999, lo=1e-12, hi=1.0),
        fov_radius=doc.number(("sensor", "fov_radius"), 40.0, positive=True),
        clutter_rate=doc.number(("sensor", "clutter_rate"), 0.1, lo=0.0),
    )
    step_radius = doc.number(("sensor", "step_radius"), 15.0, positive=True)

    raw_pos = doc.get(("sensors",), required=True)
    if not isinstance(raw_pos, list) or not raw_pos:
        raise doc.error(("sensors",), "expected a non-empty list of [x, y] positions")
    positions = np.array([doc.vector(("sensors", i), 2) for i in range(len(raw_pos))])

    obstacles = []
    for i, _ in enumerate(doc.get(("obstacles",), []) or []):
        v = doc.vector(("obstacles", i), 4)
        try:
            obstacles.append(Obstacle(*v))
        except ValueError as exc:
            raise doc.error(("obstacles", i), str(exc))

    mode = doc.get(("mode",), "scripted")
    if mode not in ("scripted", "stochastic"):
        raise doc.error(("mode",), f"mode must be 'scripted' or 'stochastic', got {mode!r}")
    scripted = []
    for i, _ in enumerate(doc.get(("targets",), []) or []):
        b = int(doc.number(("targets", i, "birth"), required=True, lo=1))
        d = int(doc.number(("targets", i, "death"), required=True))
        if not b < d:
            raise doc.error(("targets", i), f"birth step {b} must precede death step {d}")
        st = doc.vector(("targets", i, "state"), 4)
        scripted.append(ScriptedTarget(b, d, None if st is None else tuple(st)))
    if mode == "scripted" and not scripted:
        raise doc.error(("targets",), "scripted mode needs a 'targets' list")

    half = extent / 2
    for i, p in enumerate(positions):
        if np.any(np.abs(p) > half):
            raise doc.error(("sensors", i), "sensor starts outside the surveillance square")
        for o in obstacles:
            if o.contains(p):
                raise doc.error(("sensors", i), "sensor starts inside an obstacle")

    scen = Scenario(
        extent=extent, obstacles=tuple(obstacles), motion=motion, birth=birth, sensor=sensor,
        sensor_positions=positions, steps=steps, seed=int(doc.number(("seed",), 0)),
        step_radius=step_radius, mode=mode, scripted=tuple(scripted),
        truth_q=doc.number(("truth_q",), None, positive=True),
        name=str(doc.get(("name",), os.path.splitext(os.path.basename(path))[0])),
    )
    if doc.get(("require_blocked_path",), True):
        free = scen.check_blocked_path()
        if free:
            raise doc.error(("sensors", free[0]),
                            "obstacles must block the straight path from every sensor to the birth location")
    return scen


@dataclass
class AlgorithmSpec:
    name: str
    planner: PlannerConfig


@dataclass
class ExperimentConfig:
    scenario: Scenario
    scenario_path: str
    algorithms: List[AlgorithmSpec]
    runs: int = 1
    seed: int = 0
    c: float = 80.0
    output: str = "results"
    steps: Optional[int] = None
    workers: int = 1
    filter_options: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = None

    def echo(self) -> dict:
        return {
            "scenario": self.scenario_path,
            "scenario_name": self.scenario.name,
            "runs": self.runs,
            "seed": self.seed,
            "steps": self.scenario.steps,
            "clutter_rate": self.scenario.sensor.clutter_rate,
            "gospa_c": self.c,
            "filter": self.filter_options,
            "algorithms": [{"name": a.name, **a.planner.__dict__} for a in self.algorithms],
        }


def load_experiment(path: str) -> ExperimentConfig:
    doc = _Doc(path)
    scen_rel = doc.get(("scenario",), required=True)
    if not isinstance(scen_rel, str):
        raise doc.error(("scenario",), "expected a path to a scenario file")
    scen_path = scen_rel if os.path.isabs(scen_rel) else os.path.join(os.path.dirname(path), scen_rel)
    if not os.path.exists(scen_path):
        raise doc.error(("scenario",), f"scenario file not found: {scen_path}")
    scenario = load_scenario(scen_path)

    overrides = {}
    clutter = doc.number(("clutter_rate",), None, lo=0.0)
    if clutter is not None:
        overrides["clutter_rate"] = clutter
    if overrides:
        scenario.sensor = replace(scenario.sensor, **overrides)
    steps = doc.number(("steps",), None, positive=True)
    if steps is not None:
        scenario.steps = int(steps)

    fov = scenario.sensor.fov_radius
    c = doc.number(("gospa_c",), 2.0 * fov, positive=True)
    discount = doc.number(("discount",), 0.9)
    if not 0 < discount <= 1:
        raise doc.error(("discount",), f"discount must lie in (0, 1], got {discount}")
    exploration = doc.number(("exploration",), 2.0, lo=0.0)
    proximity = doc.number(("proximity",), 3.0 * fov, positive=True)

    algs = doc.get(("algorithms",), required=True)
    if not isinstance(algs, list) or not algs:
        raise doc.error(("algorithms",), "expected a non-empty list")
    specs = []
    for i, a in enumerate(algs):
        if not isinstance(a, dict):
            raise doc.error(("algorithms", i), "expected a mapping")
        preset = a.get("preset")
        params = dict(ALGORITHM_PRESETS.get(str(preset).lower(), {})) if preset else {}
        if preset and str(preset).lower() not in ALGORITHM_PRESETS:
            raise doc.error(("algorithms", i, "preset"), f"unknown preset {preset!r}")
        for key in ("budget_joint", "budget_individual", "lookahead"):
            v = doc.number(("algorithms", i, key), params.get(key))
            if v is None:
                raise doc.error(("algorithms", i, key), "missing (give it or a preset)")
            if v < 1 or int(v) != v:
                raise doc.error(("algorithms", i, key), f"must be a positive integer, got {v}")
            params[key] = int(v)
        driver = str(a.get("driver", "gospa")).lower()
        if driver not in ("gospa", "kld"):
            raise doc.error(("algorithms", i, "driver"), f"driver must be gospa or kld, got {driver!r}")
        cfg = PlannerConfig(discount=discount, exploration=exploration, proximity=proximity,
                            driver=driver, detection_mode=str(a.get("detection_mode", "mean")), **params)
        specs.append(AlgorithmSpec(str(a.get("name", f"alg{i}")), cfg))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise doc.error(("algorithms",), "algorithm names must be unique")

    runs = int(doc.number(("runs",), 1, positive=True))
    out = doc.get(("output",), "results")
    out = out if os.path.isabs(out) else os.path.join(os.path.dirname(path), out)
    filt = doc.get(("filter",), {}) or {}
    if not isinstance(filt, dict):
        raise doc.error(("filter",), "expected a mapping")
    allowed = {"prune_r", "merge_gate", "report_threshold", "gate", "marginal_mode", "detection_mode"}
    for k in filt:
        if k not in allowed:
            raise doc.error(("filter", k), f"unknown filter option (allowed: {sorted(allowed)})")
    return ExperimentConfig(scenario, scen_path, specs, runs, int(doc.number(("seed",), 0)), c, out,
                            workers=int(doc.number(("workers",), 1, positive=True)),
                            filter_options=dict(filt), source=path)
