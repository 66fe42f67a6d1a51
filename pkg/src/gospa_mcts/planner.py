"""GOSPA-driven non-myopic multi-sensor planning with a reduced-tree MCTS.

Each tree edge is a joint action profile for one group of sensors. A node
stores, per Bernoulli component, the density obtained by hypothetically
updating with every detection/misdetection pattern and merging the patterns
back into one Gaussian Bernoulli. The node's immediate cost is the pattern
weighted MSGOSPA upper bound; a KLD reward can drive the same machinery.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import Bernoulli, BirthModel, MotionModel, MultiBernoulli, SensorModel, symmetrise
from .world import ActionSpace, Obstacle, available_actions

log = logging.getLogger(__name__)

ActionProfile = Tuple[int, ...]


# --------------------------------------------------------------------------- scalar building blocks


def optimal_threshold(trace_P: float, c: float) -> float:
    return 1.0 / (2.0 - min(2.0 * trace_P / c**2, 1.0))


def bernoulli_cost(r: float, P, c: float) -> float:
    """MSGOSPA upper bound of one Gaussian Bernoulli at the optimal threshold.

    ``P`` is a covariance matrix or directly its trace.
    """
    tr = float(np.trace(P)) if np.ndim(P) == 2 else float(P)
    if r <= optimal_threshold(tr, c):
        return 0.5 * c**2 * r
    return 0.5 * c**2 * (1.0 - r) + r * min(tr, c**2)


def thresholded_cost(r: float, tr: float, c: float, gamma: float) -> float:
    """Bound for an arbitrary existence threshold ``gamma``."""
    if r <= gamma:
        return 0.5 * c**2 * r
    return 0.5 * c**2 * (1.0 - r) + r * min(tr, c**2)


def _costs(r: np.ndarray, tr: np.ndarray, c: float) -> np.ndarray:
    c2 = c * c
    gamma = 1.0 / (2.0 - np.minimum(2.0 * tr / c2, 1.0))
    return np.where(r <= gamma, 0.5 * c2 * r, 0.5 * c2 * (1.0 - r) + r * np.minimum(tr, c2))


def patterns(S: int) -> List[Tuple[int, ...]]:
    """All detection patterns; sensor 0 is the most significant bit."""
    return list(itertools.product((0, 1), repeat=S))


def h_probability(r_pred: float, pbar: Sequence[float], h: Sequence[int]) -> float:
    """Probability of a detection pattern under the factorised sensor model."""
    p = 1.0
    for ps, hs in zip(pbar, h):
        p *= hs * r_pred * ps + (1 - hs) * (1.0 - r_pred * ps)
    return p


def _innovation_cov(P, sensor: SensorModel):
    S = symmetrise(sensor.H @ P @ sensor.H.T + sensor.R)
    if np.linalg.cond(S) > 1e12:
        S = S + 1e-9 * np.eye(len(S))
    return S


def hypothetical_update(b: Bernoulli, sensor: SensorModel, sensor_pos, detected: int,
                        pbar: Optional[float] = None, detection_mode: str = "mean") -> Bernoulli:
    """Update assuming zero measurements or one measurement at the predicted value."""
    if pbar is None:
        pbar = float(sensor.expected_detection_probability(sensor_pos, b.mean, b.cov, detection_mode))
    if detected:
        S = _innovation_cov(b.cov, sensor)
        PHt = b.cov @ sensor.H.T
        return b.with_(r=1.0, cov=symmetrise(b.cov - PHt @ np.linalg.solve(S, PHt.T)))
    denom = 1.0 - b.r + (1.0 - pbar) * b.r
    r = (1.0 - pbar) * b.r / denom if denom > 0 else 0.0
    return b.with_(r=r)


def merge_patterns(branches: Sequence[Tuple[float, Bernoulli]]) -> Bernoulli:
    """Collapse a pattern-weighted Bernoulli mixture into one Gaussian Bernoulli."""
    probs = np.array([p for p, _ in branches], dtype=float)
    rs = np.array([b.r for _, b in branches])
    r = float(probs @ rs)
    first = branches[0][1]
    if r <= 0:
        return first.with_(r=0.0)
    w = probs * rs / r
    means = np.array([b.mean for _, b in branches])
    mean = w @ means
    d = means - mean
    cov = np.einsum("k,kij->ij", w, np.array([b.cov for _, b in branches])) + np.einsum("k,ki,kj->ij", w, d, d)
    return Bernoulli(min(r, 1.0), mean, symmetrise(cov), first.id)


def gaussian_kld(mu_u, P_u, mu_p, P_p) -> float:
    """KL(N(mu_u, P_u) || N(mu_p, P_p))."""
    n = len(mu_u)
    Pp_inv = np.linalg.inv(P_p)
    d = np.asarray(mu_p) - np.asarray(mu_u)
    _, ld_p = np.linalg.slogdet(P_p)
    _, ld_u = np.linalg.slogdet(P_u)
    return 0.5 * (np.trace(Pp_inv @ P_u) + d @ Pp_inv @ d - n + ld_p - ld_u)


def _xlogy_ratio(a, b):
    return 0.0 if a <= 0 else a * math.log(a / b)


def kld_reward(predicted: Bernoulli, updated: Bernoulli) -> float:
    """KLD from the predicted to the updated Bernoulli with Gaussian densities.

    This closed form is a reconstruction used for the information-driven
    baseline; existence probabilities are clamped away from 0 and 1.
    """
    eps = 1e-9
    rp = min(max(predicted.r, eps), 1 - eps)
    ru = updated.r
    out = _xlogy_ratio(1.0 - ru, 1.0 - rp)
    if ru > 0:
        out += ru * (math.log(ru / rp) + gaussian_kld(updated.mean, updated.cov, predicted.mean, predicted.cov))
    return out


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class PlannerConfig:
    budget_joint: int = 200
    budget_individual: int = 40
    lookahead: int = 5
    discount: float = 0.9
    exploration: float = 2.0
    proximity: float = 120.0
    driver: str = "gospa"
    detection_mode: str = "mean"
    cost_trace: str = "position"

    def __post_init__(self):
        if self.budget_joint < 1 or self.budget_individual < 1:
            raise ValueError("budgets must be >= 1")
        if self.lookahead < 1:
            raise ValueError("lookahead must be >= 1")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if self.driver not in ("gospa", "kld"):
            raise ValueError(f"unknown cost driver {self.driver!r}")
        if self.cost_trace not in ("position", "state"):
            raise ValueError(f"unknown cost trace {self.cost_trace!r}")


@dataclass(frozen=True)
class PlanningModel:
    """Everything the planner needs to roll the belief forward."""

    motion: MotionModel
    birth: BirthModel
    sensors: Tuple[SensorModel, ...]
    c: float
    obstacles: Tuple[Obstacle, ...] = ()
    extent: float = 500.0
    step: float = 15.0

    def actions_at(self, pose) -> Tuple[int, ...]:
        return _cached_actions(round(float(pose[0]), 6), round(float(pose[1]), 6),
                               self.obstacles, self.extent, self.step)


@lru_cache(maxsize=200_000)
def _cached_actions(x, y, obstacles, extent, step):
    return tuple(available_actions((x, y), obstacles, extent, step))


# --------------------------------------------------------------------------- vectorised node evaluation


@dataclass
class Belief:
    """Array form of a multi-Bernoulli density used inside the tree."""

    r: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_state(cls, state: MultiBernoulli) -> "Belief":
        if not len(state):
            return cls(np.zeros(0), np.zeros((0, 4)), np.zeros((0, 4, 4)))
        return cls(np.array([b.r for b in state]), np.array([b.mean for b in state]),
                   np.array([b.cov for b in state]))

    def predict(self, motion: MotionModel, birth: BirthModel) -> "Belief":
        F = motion.F
        r = self.r * motion.p_survival
        mean = self.mean @ F.T
        cov = F @ self.cov @ F.T + motion.Q
        if birth.components:
            r = np.concatenate([r, [b[0] for b in birth.components]])
            mean = np.concatenate([mean, [b[1] for b in birth.components]])
            cov = np.concatenate([cov, [b[2] for b in birth.components]])
        return Belief(r, mean, cov)


def evaluate_update(prior: Belief, sensors: Sequence[SensorModel], poses, c: float,
                    driver: str = "gospa", detection_mode: str = "mean",
                    cost_trace: str = "position"):
    """Hypothetical multi-sensor update of a predicted belief.

    Returns ``(cost, merged_belief, pbar)`` where ``cost`` is the pattern
    weighted MSGOSPA bound (or the negated expected KLD for ``driver="kld"``)
    and ``pbar`` has shape ``(n, S)``.
    """
    n = len(prior.r)
    S = len(sensors)
    if n == 0:
        return 0.0, prior, np.zeros((0, S))
    pbar = np.stack([sensors[s].expected_detection_probability(poses[s], prior.mean, prior.cov, detection_mode)
                     for s in range(S)], axis=1)
    r0 = prior.r
    r_h = r0[:, None]
    cov_h = prior.cov[:, None]
    prob = np.ones((n, 1))
    for s, sensor in enumerate(sensors):
        p = pbar[:, s][:, None]
        H = sensor.H
        denom = 1.0 - r_h + (1.0 - p) * r_h
        r_miss = np.where(denom > 0, (1.0 - p) * r_h / np.where(denom > 0, denom, 1.0), 0.0)
        PHt = cov_h @ H.T
        Sm = H @ PHt + sensor.R
        cov_det = cov_h - PHt @ np.linalg.solve(Sm, np.swapaxes(PHt, -1, -2))
        cov_det = symmetrise(cov_det)
        # Interleave children: branch b -> (2b: miss, 2b+1: detect).
        r_h = np.stack([r_miss, np.ones_like(r_h)], axis=2).reshape(n, -1)
        cov_h = np.stack([cov_h, cov_det], axis=2).reshape(n, -1, 4, 4)
        ps = r0[:, None] * p
        prob = np.stack([prob * (1.0 - ps), prob * ps], axis=2).reshape(n, -1)

    if cost_trace == "position":
        H = sensors[0].H
        tr = np.einsum("ij,nkjl,il->nk", H, cov_h, H)
    else:
        tr = np.trace(cov_h, axis1=-2, axis2=-1)

    if driver == "gospa":
        cost = float(np.sum(prob * _costs(r_h, tr, c)))
    else:
        cost = -float(np.sum(prob * _kld_batch(prior, r_h, cov_h)))

    r_m = np.sum(prob * r_h, axis=1)
    w = prob * r_h
    safe = np.where(r_m > 0, r_m, 1.0)
    cov_m = np.einsum("nk,nkij->nij", w / safe[:, None], cov_h)
    cov_m = np.where((r_m > 0)[:, None, None], symmetrise(cov_m), cov_h[:, 0])
    return cost, Belief(np.clip(r_m, 0.0, 1.0), prior.mean, cov_m), pbar


def _kld_batch(prior: Belief, r_h: np.ndarray, cov_h: np.ndarray) -> np.ndarray:
    eps = 1e-9
    rp = np.clip(prior.r, eps, 1 - eps)[:, None]
    d = prior.cov.shape[-1]
    Pp_inv = np.linalg.inv(prior.cov)[:, None]
    _, ld_p = np.linalg.slogdet(prior.cov)
    _, ld_u = np.linalg.slogdet(cov_h)
    g = 0.5 * (np.trace(Pp_inv @ cov_h, axis1=-2, axis2=-1) - d + ld_p[:, None] - ld_u)
    with np.errstate(divide="ignore", invalid="ignore"):
        exist = np.where(r_h > 0, r_h * (np.log(np.where(r_h > 0, r_h, 1.0) / rp) + g), 0.0)
        one_m = 1.0 - r_h
        absent = np.where(one_m > 0, one_m * np.log(np.where(one_m > 0, one_m, 1.0) / (1.0 - rp)), 0.0)
    return exist + absent


def myopic_bound(state: MultiBernoulli, sensors: Sequence[SensorModel], poses, c: float,
                 detection_mode: str = "mean", cost_trace: str = "position") -> float:
    """One-step MSGOSPA upper bound of a predicted state for sensors at ``poses``.

    Direct per-component, per-pattern evaluation (no vectorisation).
    """
    total = 0.0
    S = len(sensors)
    for b in state:
        pbar = [float(sensors[s].expected_detection_probability(poses[s], b.mean, b.cov, detection_mode))
                for s in range(S)]
        for h in patterns(S):
            post = b
            for s in range(S):
                post = hypothetical_update(post, sensors[s], poses[s], h[s], pbar=pbar[s])
            P = sensors[0].H @ post.cov @ sensors[0].H.T if cost_trace == "position" else post.cov
            total += h_probability(b.r, pbar, h) * bernoulli_cost(post.r, P, c)
    return total


# --------------------------------------------------------------------------- tree


class PlanNode:
    __slots__ = ("depth", "action", "parent", "poses", "belief", "pbar", "cost", "path_cost",
                 "n", "value", "children", "untried", "exhausted")

    def __init__(self, depth, action, parent, poses, belief, pbar=None, cost=0.0, path_cost=0.0):
        self.depth = depth
        self.action = action
        self.parent = parent
        self.poses = poses
        self.belief = belief
        self.pbar = pbar
        self.cost = cost
        self.path_cost = path_cost
        self.n = 0
        self.value = 0.0
        self.children: Dict[ActionProfile, PlanNode] = {}
        self.untried: List[ActionProfile] = []
        self.exhausted = False

    def backpropagate(self, delta: float) -> None:
        self.value = (self.value * self.n + delta) / (self.n + 1)
        self.n += 1

    def __repr__(self):
        return f"PlanNode(depth={self.depth}, action={self.action}, n={self.n}, value={self.value:.4g})"


def uct_select(node: PlanNode, exploration: float, scale: float = 1.0) -> PlanNode:
    """Child maximising ``-value/scale + exploration * sqrt(ln n / n_j)``.

    Unvisited children come first; exhausted children are skipped; ties go to
    the lowest action profile.
    """
    kids = [node.children[a] for a in sorted(node.children) if not node.children[a].exhausted]
    if not kids:
        kids = [node.children[a] for a in sorted(node.children)]
    for k in kids:
        if k.n == 0:
            return k
    scale = scale if scale > 0 else 1.0
    ln_n = math.log(max(node.n, 1))
    best, best_score = kids[0], -math.inf
    for k in kids:
        score = -k.value / scale + exploration * math.sqrt(ln_n / k.n)
        if score > best_score:
            best, best_score = k, score
    return best


class MCTSPlanner:
    """Reduced-tree MCTS for one group of sensors."""

    def __init__(self, model: PlanningModel, config: PlannerConfig, rng: np.random.Generator):
        self.model = model
        self.config = config
        self.rng = rng
        self.cost_scale = 0.0
        self.expansions = 0
        self.iterations = 0

    # -- helpers
    def _profiles(self, poses) -> List[ActionProfile]:
        return list(itertools.product(*(self.model.actions_at(p) for p in poses)))

    def _move(self, poses, profile) -> np.ndarray:
        space = ActionSpace(self.model.step)
        return np.array([p + space.displacement(a) for p, a in zip(poses, profile)])

    def _evaluate(self, prior: Belief, poses):
        cfg = self.config
        return evaluate_update(prior, self.model.sensors, poses, self.model.c, cfg.driver,
                               cfg.detection_mode, cfg.cost_trace)

    def _weight(self, depth: int) -> float:
        return self.config.discount ** (depth - 1)

    def _prior_for_child(self, node: PlanNode) -> Belief:
        if node.parent is None:
            return node.belief
        return node.belief.predict(self.model.motion, self.model.birth)

    # -- phases
    def _expand(self, node: PlanNode) -> PlanNode:
        idx = int(self.rng.integers(len(node.untried)))
        profile = node.untried.pop(idx)
        poses = self._move(node.poses, profile)
        cost, belief, pbar = self._evaluate(self._prior_for_child(node), poses)
        depth = node.depth + 1
        child = PlanNode(depth, profile, node, poses, belief, pbar, cost,
                         node.path_cost + self._weight(depth) * cost)
        if depth < self.config.lookahead:
            child.untried = self._profiles(poses)
        node.children[profile] = child
        self.expansions += 1
        return child

    def _rollout(self, node: PlanNode) -> float:
        delta = node.path_cost
        belief, poses = node.belief, node.poses
        for depth in range(node.depth + 1, self.config.lookahead + 1):
            profile = tuple(int(self.rng.choice(self.model.actions_at(p))) for p in poses)
            poses = self._move(poses, profile)
            cost, belief, _ = self._evaluate(belief.predict(self.model.motion, self.model.birth), poses)
            delta += self._weight(depth) * cost
        return delta

    def _mark_exhausted(self, node: PlanNode) -> None:
        # A node is exhausted once it sits at the horizon or every action below it is.
        while node is not None:
            open_below = node.untried or not all(ch.exhausted for ch in node.children.values())
            if node.depth < self.config.lookahead and open_below:
                return
            node.exhausted = True
            node = node.parent

    def search(self, state: MultiBernoulli, poses, budget: int) -> PlanNode:
        root = PlanNode(0, None, None, np.asarray(poses, dtype=float).reshape(-1, 2),
                        Belief.from_state(state))
        root.untried = self._profiles(root.poses)
        if budget < len(root.untried):
            log.warning("budget %d below %d root actions; planning over an expanded subset",
                        budget, len(root.untried))
        while self.expansions < budget and not root.exhausted:
            self.iterations += 1
            node = root
            while not node.untried and node.children and node.depth < self.config.lookahead:
                node = uct_select(node, self.config.exploration, self.cost_scale)
            if node.untried:
                node = self._expand(node)
                delta = self._rollout(node)
            else:
                delta = node.path_cost
            if node.depth >= self.config.lookahead or (not node.untried and not node.children):
                self._mark_exhausted(node)
            self.cost_scale = max(self.cost_scale, abs(delta))
            walk = node
            while walk is not None:
                walk.backpropagate(delta)
                walk = walk.parent
        return root


def best_child(root: PlanNode) -> PlanNode:
    return min((root.children[a] for a in sorted(root.children)), key=lambda ch: ch.value)


def mcts_plan(state: MultiBernoulli, poses, model: PlanningModel, config: PlannerConfig,
              rng: np.random.Generator, budget: Optional[int] = None,
              return_tree: bool = False):
    """Plan one action profile for the sensors at ``poses`` (one group).

    ``state`` is the belief predicted to the current step. ``budget`` defaults
    to the joint or individual budget depending on the group size.
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    if budget is None:
        budget = config.budget_individual if len(poses) == 1 else \
            max(1, int(round(config.budget_joint * len(poses) / 2)))
    planner = MCTSPlanner(model, config, rng)
    root = planner.search(state, poses, budget)
    profile = best_child(root).action
    return (profile, root) if return_tree else profile


def group_sensors(poses, proximity: float) -> List[List[int]]:
    """Connected components of the 'closer than ``proximity``' sensor graph."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    if proximity <= 0:
        raise ValueError("proximity threshold must be positive")
    n = len(poses)
    label = list(range(n))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(poses[i] - poses[j]) < proximity:
                label[find(i)] = find(j)
    groups: Dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


@dataclass
class StepPlan:
    actions: List[int]
    groups: List[List[int]]
    tree_sizes: List[int] = field(default_factory=list)
    root_values: List[Dict[str, float]] = field(default_factory=list)

    @property
    def mode(self) -> str:
        return "joint" if any(len(g) > 1 for g in self.groups) else "individual"


def plan_step(state: MultiBernoulli, poses, model: PlanningModel, config: PlannerConfig,
              seed_entropy: Sequence[int]) -> StepPlan:
    """Group sensors by proximity and plan every group with its own tree.

    Each group's RNG derives from ``seed_entropy`` plus the group index, so
    group order or concurrency never changes the outcome.
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 2)
    groups = group_sensors(poses, config.proximity)
    actions = [6] * len(poses)
    plan = StepPlan(actions, groups)
    for g_idx, group in enumerate(groups):
        rng = np.random.default_rng([*seed_entropy, g_idx])
        sub = PlanningModel(model.motion, model.birth, tuple(model.sensors[s] for s in group),
                            model.c, model.obstacles, model.extent, model.step)
        profile, root = mcts_plan(state, poses[group], sub, config, rng, return_tree=True)
        for s, a in zip(group, profile):
            actions[s] = int(a)
        plan.tree_sizes.append(_tree_size(root))
        plan.root_values.append({",".join(map(str, a)): ch.value for a, ch in sorted(root.children.items())})
    return plan


def _tree_size(root: PlanNode) -> int:
    stack, count = [root], 0
    while stack:
        node = stack.pop()
        count += 1
        stack.extend(node.children.values())
    return count
