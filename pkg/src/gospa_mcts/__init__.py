"""Multi-Bernoulli tracking with GOSPA-driven non-myopic multi-sensor planning."""
from .filter import MultiBernoulliFilter, compute_marginals, estimate, predict, project_to_mb, reduce, update_sensor
from .gospa import GospaBreakdown, GospaParams, gospa, rms_gospa, solve_assignment
from .models import Bernoulli, BirthModel, MotionModel, MultiBernoulli, SensorModel
from .planner import (
    PlannerConfig,
    PlanningModel,
    bernoulli_cost,
    group_sensors,
    h_probability,
    hypothetical_update,
    kld_reward,
    mcts_plan,
    merge_patterns,
    myopic_bound,
    uct_select,
)

__all__ = [
    "Bernoulli", "BirthModel", "GospaBreakdown", "GospaParams", "MotionModel", "MultiBernoulli",
    "MultiBernoulliFilter", "PlannerConfig", "PlanningModel", "SensorModel", "bernoulli_cost",
    "compute_marginals", "estimate", "gospa", "group_sensors", "h_probability",
    "hypothetical_update", "kld_reward", "mcts_plan", "merge_patterns", "myopic_bound",
    "predict", "project_to_mb", "reduce", "rms_gospa", "solve_assignment", "uct_select",
    "update_sensor",
]
