"""Seeded Monte-Carlo closed loop: plan, move, sense, filter, estimate, score."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import AlgorithmSpec, ExperimentConfig
from .filter import MultiBernoulliFilter
from .gospa import GospaParams, gospa, rms_gospa
from .planner import PlanningModel, plan_step
from .world import Scenario, apply_action, generate_measurements, write_ground_truth_csv

log = logging.getLogger(__name__)

RECORD_FIELDS = ["algorithm", "run", "step", "sq_gospa", "loc_sq", "missed", "false",
                 "plan_mode", "n_targets", "n_estimates", "sensor_positions"]
TIMING_FIELDS = ["algorithm", "run", "step", "plan_wallclock_seconds"]


@dataclass
class RunRecord:
    algorithm: str
    run: int
    step: int
    sq_gospa: float
    loc_sq: float
    missed: int
    false: int
    plan_mode: str
    plan_wallclock_seconds: float
    n_targets: int = 0
    n_estimates: int = 0
    sensor_positions: str = ""

    def row(self) -> dict:
        return {
            "algorithm": self.algorithm, "run": self.run, "step": self.step,
            "sq_gospa": f"{self.sq_gospa:.9g}", "loc_sq": f"{self.loc_sq:.9g}",
            "missed": self.missed, "false": self.false, "plan_mode": self.plan_mode,
            "n_targets": self.n_targets, "n_estimates": self.n_estimates,
            "sensor_positions": self.sensor_positions,
        }

    def positions(self) -> np.ndarray:
        return np.array([[float(v) for v in p.split(":")] for p in self.sensor_positions.split(";")])


def run_single(scenario: Scenario, algorithm: AlgorithmSpec, run: int, master_seed: int, c: float,
               filter_options: Optional[dict] = None, alg_index: int = 0,
               debug_sink: Optional[list] = None) -> List[RunRecord]:
    """One Monte-Carlo run of one algorithm over the whole scenario."""
    sensor = scenario.sensor
    sensors = tuple(sensor for _ in range(scenario.n_sensors))
    model = PlanningModel(scenario.motion, scenario.birth, sensors, c, scenario.obstacles,
                          scenario.extent, scenario.step_radius)
    # Same measurement-noise stream for every algorithm within a run.
    sim_rng = np.random.default_rng([master_seed, run, 1])
    truth = scenario.ground_truth(np.random.default_rng([master_seed, run, 0]))
    filt = MultiBernoulliFilter(scenario.motion, scenario.birth, **(filter_options or {}))
    params = GospaParams(c)
    poses = scenario.sensor_positions.copy()
    records = []
    for k in range(1, scenario.steps + 1):
        state = filt.predict()
        t0 = time.perf_counter()
        plan = plan_step(state, poses, model, algorithm.planner, (master_seed, run, alg_index, k))
        wall = time.perf_counter() - t0
        poses = np.array([apply_action(p, a, scenario.step_radius) for p, a in zip(poses, plan.actions)])
        X = np.array([t.state for t in truth[k]]).reshape(-1, 4)
        Zs = [generate_measurements(p, sensor, X, sim_rng) for p in poses]
        filt.update(Zs, sensors, poses)
        est = filt.estimate()
        g = gospa(X[:, [0, 2]], est, params)
        records.append(RunRecord(
            algorithm.name, run, k, g.sq_total, g.loc_sq, g.missed_count, g.false_count,
            plan.mode, wall, len(X), len(est),
            ";".join(f"{p[0]:.3f}:{p[1]:.3f}" for p in poses),
        ))
        if debug_sink is not None:
            debug_sink.append({"algorithm": algorithm.name, "run": run, "step": k,
                               "groups": plan.groups, "tree_sizes": plan.tree_sizes,
                               "root_values": plan.root_values})
    return records


def _job(args):
    scenario, alg, run, seed, c, fopts, a_idx, debug = args
    sink = [] if debug else None
    recs = run_single(scenario, alg, run, seed, c, fopts, a_idx, sink)
    return recs, sink or []


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None,
                   debug_planner: bool = False, write: bool = True) -> List[RunRecord]:
    """Run every (algorithm, run) pair and write result files to ``config.output``."""
    workers = workers or config.workers
    jobs = [(config.scenario, alg, run, config.seed, config.c, config.filter_options, a_idx, debug_planner)
            for a_idx, alg in enumerate(config.algorithms) for run in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    order = {a.name: i for i, a in enumerate(config.algorithms)}
    records = sorted((r for recs, _ in results for r in recs),
                     key=lambda r: (order[r.algorithm], r.run, r.step))
    if write:
        os.makedirs(config.output, exist_ok=True)
        write_records(config.output, records)
        with open(os.path.join(config.output, "config.json"), "w") as fh:
            json.dump(config.echo(), fh, indent=2, sort_keys=True)
        if config.scenario.mode == "scripted":
            write_ground_truth_csv(os.path.join(config.output, "ground_truth.csv"),
                                   config.scenario.ground_truth())
        write_summary(config.output, records, list(order))
        emit_plot_data(config.output, records, list(order))
        if debug_planner:
            with open(os.path.join(config.output, "planner_debug.jsonl"), "w") as fh:
                for _, sink in results:
                    for line in sink:
                        fh.write(json.dumps(line, sort_keys=True) + "\n")
    return records


# --------------------------------------------------------------------------- files


def write_records(directory: str, records: Sequence[RunRecord]) -> None:
    with open(os.path.join(directory, "records.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, RECORD_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())
    # Wall-clock lives apart so records.csv stays byte-reproducible.
    with open(os.path.join(directory, "timing.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, TIMING_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow({"algorithm": r.algorithm, "run": r.run, "step": r.step,
                        "plan_wallclock_seconds": f"{r.plan_wallclock_seconds:.6f}"})


def read_records(directory: str) -> List[RunRecord]:
    timing = {}
    tpath = os.path.join(directory, "timing.csv")
    if os.path.exists(tpath):
        with open(tpath, newline="") as fh:
            for row in csv.DictReader(fh):
                timing[(row["algorithm"], int(row["run"]), int(row["step"]))] = float(row["plan_wallclock_seconds"])
    out = []
    with open(os.path.join(directory, "records.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["algorithm"], int(row["run"]), int(row["step"]))
            out.append(RunRecord(row["algorithm"], key[1], key[2], float(row["sq_gospa"]),
                                 float(row["loc_sq"]), int(row["missed"]), int(row["false"]),
                                 row["plan_mode"], timing.get(key, float("nan")),
                                 int(row["n_targets"]), int(row["n_estimates"]),
                                 row["sensor_positions"]))
    return out


def _algorithm_order(records: Iterable[RunRecord], order: Optional[List[str]]) -> List[str]:
    if order:
        return list(order)
    seen: List[str] = []
    for r in records:
        if r.algorithm not in seen:
            seen.append(r.algorithm)
    return seen


def summarise(records: Sequence[RunRecord], order: Optional[List[str]] = None) -> List[dict]:
    """Per algorithm: RMS-GOSPA over all (run, step) pairs and mean planning time."""
    rows = []
    for name in _algorithm_order(records, order):
        mine = [r for r in records if r.algorithm == name]
        if not mine:
            continue
        times = [r.plan_wallclock_seconds for r in mine if np.isfinite(r.plan_wallclock_seconds)]
        rows.append({
            "algorithm": name,
            "rms_gospa": rms_gospa([r.sq_gospa for r in mine]),
            "mean_plan_seconds": float(np.mean(times)) if times else float("nan"),
            "runs": len({r.run for r in mine}),
            "steps": len({r.step for r in mine}),
        })
    return rows


def write_summary(directory: str, records: Sequence[RunRecord], order=None) -> List[dict]:
    """Write the summary table; wall-clock columns go to ``timing_summary.csv``."""
    rows = summarise(records, order)
    stable = [{k: v for k, v in r.items() if k != "mean_plan_seconds"} for r in rows]
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        json.dump(stable, fh, indent=2)
    with open(os.path.join(directory, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, ["algorithm", "rms_gospa", "runs", "steps"])
        w.writeheader()
        w.writerows(stable)
    with open(os.path.join(directory, "timing_summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, ["algorithm", "mean_plan_seconds"])
        w.writeheader()
        w.writerows({"algorithm": r["algorithm"], "mean_plan_seconds": r["mean_plan_seconds"]} for r in rows)
    return rows


def emit_plot_data(directory: str, records: Sequence[RunRecord], order=None) -> Dict[str, str]:
    """Write one CSV per figure: target count, RMS-GOSPA and its decomposition per step."""
    names = _algorithm_order(records, order)
    by_key: Dict[tuple, List[RunRecord]] = defaultdict(list)
    counts: Dict[int, int] = {}
    for r in records:
        by_key[(r.algorithm, r.step)].append(r)
        counts.setdefault(r.step, r.n_targets)
    steps = sorted({r.step for r in records})
    paths = {name: os.path.join(directory, f"plot_{name}.csv")
             for name in ("target_count", "rms_gospa", "decomposition")}
    with open(paths["target_count"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "n_targets"])
        for k in steps:
            w.writerow([k, counts[k]])
    with open(paths["rms_gospa"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "algorithm", "rms_gospa"])
        for name in names:
            for k in steps:
                rs = by_key.get((name, k))
                if rs:
                    w.writerow([k, name, f"{rms_gospa([r.sq_gospa for r in rs]):.9g}"])
    with open(paths["decomposition"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "algorithm", "sq_gospa", "loc_sq", "missed_sq", "false_sq"])
        for name in names:
            for k in steps:
                rs = by_key.get((name, k))
                if not rs:
                    continue
                sq = np.mean([r.sq_gospa for r in rs])
                loc = np.mean([r.loc_sq for r in rs])
                # Split the non-localisation part by the missed/false counts.
                card = sq - loc
                nm = np.mean([r.missed for r in rs])
                nf = np.mean([r.false for r in rs])
                missed = card * nm / (nm + nf) if nm + nf > 0 else 0.0
                w.writerow([k, name, f"{sq:.9g}", f"{loc:.9g}", f"{missed:.9g}", f"{card - missed:.9g}"])
    return paths
