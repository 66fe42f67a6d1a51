"""Gaussian multi-Bernoulli filter.

Prediction with multi-Bernoulli births, one sequential update per sensor that
yields a multi-Bernoulli mixture, projection back to a multi-Bernoulli through
association marginals (exact enumeration or loopy belief propagation),
pruning/merging and state extraction.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from .models import Bernoulli, BirthModel, MotionModel, MultiBernoulli, SensorModel, symmetrise

log = logging.getLogger(__name__)

GATE_CHI2 = 13.8
MAX_EXACT_HYPOTHESES = 10_000
WEIGHT_FLOOR = 1e-300


class ConfigurationError(ValueError):
    """Model configuration cannot explain the data (e.g. zero clutter intensity)."""


# --------------------------------------------------------------------------- predict


def predict(state: MultiBernoulli, motion: MotionModel, birth: BirthModel) -> MultiBernoulli:
    comps = []
    for b in state.components:
        cov = symmetrise(motion.F @ b.cov @ motion.F.T + motion.Q)
        comps.append(Bernoulli(b.r * motion.p_survival, motion.F @ b.mean, cov, b.id))
    next_id = state.next_id
    for k, (r, m, P) in enumerate(birth.components):
        comps.append(Bernoulli(r, m.copy(), P.copy(), next_id + k))
    return MultiBernoulli(tuple(comps), state.time_index + 1)


# --------------------------------------------------------------------------- update


@dataclass(frozen=True)
class LocalHypothesis:
    weight: float
    bernoulli: Bernoulli
    measurement: int = -1  # -1 is the misdetection hypothesis


@dataclass
class MbmState:
    """Multi-Bernoulli mixture after one sensor update.

    ``hypotheses[i][0]`` is the misdetection hypothesis of component ``i``; the
    rest are detections of gated measurements. Detection weights are already
    divided by the clutter intensity where it is positive; a measurement with
    zero clutter intensity carries ``clutter[j] = 0`` instead, i.e. it must be
    assigned to some component.
    """

    prior: MultiBernoulli
    hypotheses: List[List[LocalHypothesis]]
    clutter: np.ndarray

    @property
    def n_measurements(self) -> int:
        return len(self.clutter)

    def hypothesis_count_bound(self) -> int:
        return int(np.prod([len(h) for h in self.hypotheses], dtype=float)) if self.hypotheses else 1

    def global_hypotheses(self) -> Iterator[Tuple[Tuple[int, ...], float]]:
        """Yield ``(e, weight)`` for every valid global hypothesis (unnormalised)."""
        n = len(self.hypotheses)
        m = self.n_measurements

        def rec(i, used, idx, w):
            if i == n:
                free = [j for j in range(m) if j not in used]
                yield tuple(idx), w * float(np.prod(self.clutter[free]))
                return
            for li, lh in enumerate(self.hypotheses[i]):
                j = lh.measurement
                if j >= 0 and j in used:
                    continue
                if lh.weight <= 0:
                    continue
                yield from rec(i + 1, used | ({j} if j >= 0 else set()), idx + [li], w * lh.weight)

        yield from rec(0, frozenset(), [], 1.0)


def update_sensor(
    state: MultiBernoulli,
    measurements,
    sensor: SensorModel,
    sensor_pos,
    *,
    gate: float = GATE_CHI2,
    detection_mode: str = "mean",
    on_unexplained: str = "raise",
) -> MbmState:
    """Update every component with one sensor's measurement set.

    ``on_unexplained`` handles a measurement with zero clutter intensity that no
    component gates: ``"raise"`` a :class:`ConfigurationError` or ``"drop"`` it.
    """
    Z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    m = len(Z)
    kappa = sensor.clutter_intensity(sensor_pos, Z) if m else np.zeros(0)
    H, R = sensor.H, sensor.R

    per_comp = []
    gated_any = np.zeros(m, dtype=bool)
    for b in state.components:
        pd = float(sensor.expected_detection_probability(sensor_pos, b.mean, b.cov, detection_mode))
        miss_w = 1.0 - b.r * pd
        miss_r = b.r * (1.0 - pd) / miss_w if miss_w > WEIGHT_FLOOR else 0.0
        hyps = [LocalHypothesis(miss_w, b.with_(r=miss_r), -1)]
        dets = []
        if m and pd > 0 and b.r > 0:
            S = symmetrise(H @ b.cov @ H.T + R)
            S_inv = np.linalg.inv(S)
            K = b.cov @ H.T @ S_inv
            cov_u = symmetrise(b.cov - K @ S @ K.T)
            innov = Z - (H @ b.mean + sensor.bias)
            d2 = np.einsum("ji,ik,jk->j", innov, S_inv, innov)
            norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(S)))
            lik = norm * np.exp(-0.5 * d2)
            for j in np.flatnonzero(d2 < gate):
                gated_any[j] = True
                dets.append((j, b.r * pd * lik[j], b.with_(r=1.0, mean=b.mean + K @ innov[j], cov=cov_u)))
        per_comp.append((hyps, dets))

    unexplained = (kappa <= 0) & ~gated_any
    if np.any(unexplained):
        if on_unexplained == "raise":
            raise ConfigurationError(
                f"measurements {np.flatnonzero(unexplained).tolist()} have zero clutter "
                "intensity and are not gated by any component"
            )
        log.debug("dropping %d unexplained measurements", int(unexplained.sum()))
    keep = np.flatnonzero(~unexplained)
    remap = {int(j): k for k, j in enumerate(keep)}

    hypotheses = []
    for hyps, dets in per_comp:
        for j, w, bern in dets:
            if j in remap:
                scaled = w / kappa[j] if kappa[j] > 0 else w
                hypotheses_w = scaled if scaled > WEIGHT_FLOOR else 0.0
                hyps.append(LocalHypothesis(hypotheses_w, bern, remap[j]))
        hypotheses.append(hyps)
    clutter = np.where(kappa[keep] > 0, 1.0, 0.0)
    return MbmState(state, hypotheses, clutter)


# --------------------------------------------------------------------------- marginals


@dataclass
class Marginals:
    weights: List[np.ndarray]
    method: str
    converged: bool = True
    iterations: int = 0


def _exact_marginals(mbm: MbmState) -> Marginals:
    acc = [np.zeros(len(h)) for h in mbm.hypotheses]
    total = 0.0
    for e, w in mbm.global_hypotheses():
        if w <= WEIGHT_FLOOR:
            continue
        total += w
        for i, li in enumerate(e):
            acc[i][li] += w
    if total <= 0:
        raise ConfigurationError("all global hypotheses have zero weight")
    return Marginals([a / total for a in acc], "exact")


def _lbp_marginals(mbm: MbmState, damping=0.5, max_iter=200, tol=1e-8) -> Marginals:
    n, m = len(mbm.hypotheses), mbm.n_measurements
    w0 = np.array([h[0].weight for h in mbm.hypotheses])
    W = np.zeros((n, m))
    for i, hyps in enumerate(mbm.hypotheses):
        for lh in hyps[1:]:
            W[i, lh.measurement] = lh.weight
    kappa = np.maximum(mbm.clutter, WEIGHT_FLOOR)
    mu = np.ones((n, m))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prod = W * mu
        nu = W / np.maximum(w0[:, None] + prod.sum(axis=1, keepdims=True) - prod, WEIGHT_FLOOR)
        mu_new = 1.0 / np.maximum(kappa[None, :] + nu.sum(axis=0, keepdims=True) - nu, WEIGHT_FLOOR)
        mu_new = damping * mu + (1 - damping) * mu_new
        delta = np.max(np.abs(mu_new - mu)) if mu.size else 0.0
        mu = mu_new
        if delta < tol:
            converged = True
            break
    out = []
    for i, hyps in enumerate(mbm.hypotheses):
        vals = np.array([w0[i]] + [lh.weight * mu[i, lh.measurement] for lh in hyps[1:]])
        s = vals.sum()
        out.append(vals / s if s > 0 else np.eye(len(vals))[0])
    return Marginals(out, "lbp", converged, it)


def compute_marginals(mbm: MbmState, mode: str = "auto", **lbp_options) -> Marginals:
    """Per-component local-hypothesis marginal weights.

    ``mode`` is ``"exact"``, ``"lbp"`` or ``"auto"`` (exact while the global
    hypothesis count stays below :data:`MAX_EXACT_HYPOTHESES`).
    """
    if not mbm.hypotheses:
        return Marginals([], "exact")
    enumerable = mbm.hypothesis_count_bound() <= MAX_EXACT_HYPOTHESES
    if mode == "exact" or (mode == "auto" and enumerable):
        return _exact_marginals(mbm)
    if mode not in ("lbp", "auto"):
        raise ValueError(f"unknown marginal mode {mode!r}")
    result = _lbp_marginals(mbm, **lbp_options)
    if not result.converged:
        if enumerable:
            return _exact_marginals(mbm)
        warnings.warn("loopy belief propagation did not converge; using last iterate")
    return result


# --------------------------------------------------------------------------- projection


def moment_match(weights, means, covs):
    """Single Gaussian with the first two moments of a weighted mixture."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    mean = w @ means
    d = means - mean
    cov = np.einsum("k,kij->ij", w, covs) + np.einsum("k,ki,kj->ij", w, d, d)
    return mean, symmetrise(cov)


def project_to_mb(mbm: MbmState, marginals: Marginals) -> MultiBernoulli:
    comps = []
    for prior, hyps, w in zip(mbm.prior.components, mbm.hypotheses, marginals.weights):
        wr = np.array([wi * lh.bernoulli.r for wi, lh in zip(w, hyps)])
        wr[wr < WEIGHT_FLOOR] = 0.0
        r = float(wr.sum())
        if r <= 0:
            comps.append(prior.with_(r=0.0))
            continue
        mean, cov = moment_match(
            wr, [lh.bernoulli.mean for lh in hyps], [lh.bernoulli.cov for lh in hyps]
        )
        comps.append(Bernoulli(min(r, 1.0), mean, cov, prior.id))
    return MultiBernoulli(tuple(comps), mbm.prior.time_index)


# --------------------------------------------------------------------------- reduce / estimate


def mahalanobis(a: Bernoulli, b: Bernoulli) -> float:
    """Symmetrised Mahalanobis distance between two component means."""
    d = a.mean - b.mean
    return float(np.sqrt(0.5 * (d @ np.linalg.solve(a.cov, d) + d @ np.linalg.solve(b.cov, d))))


def reduce(state: MultiBernoulli, prune_r: float = 1e-4, merge_gate: float = 1.0) -> MultiBernoulli:
    """Prune unlikely components and merge components closer than ``merge_gate``.

    Merging weights the densities by existence probability; the merged
    existence probability is the (capped) sum.
    """
    kept = [b for b in state.components if b.r >= prune_r]
    kept.sort(key=lambda b: (-b.r, b.id))
    out = []
    while kept:
        lead = kept.pop(0)
        group = [lead] + [b for b in kept if mahalanobis(lead, b) < merge_gate]
        if len(group) == 1:
            out.append(lead)
            continue
        kept = [b for b in kept if all(b is not g for g in group)]
        rs = np.array([b.r for b in group])
        mean, cov = moment_match(rs, [b.mean for b in group], [b.cov for b in group])
        out.append(Bernoulli(min(float(rs.sum()), 1.0), mean, cov, lead.id))
    out.sort(key=lambda b: b.id)
    return MultiBernoulli(tuple(out), state.time_index)


def estimate(state: MultiBernoulli, threshold: float = 0.5, H=None) -> np.ndarray:
    """Positions of the components whose existence probability exceeds ``threshold``."""
    H = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]]) if H is None else H
    pts = [H @ b.mean for b in state.components if b.r > threshold]
    return np.array(pts).reshape(-1, 2)


# --------------------------------------------------------------------------- convenience


@dataclass
class MultiBernoulliFilter:
    """Stateful wrapper running predict / per-sensor update / reduce."""

    motion: MotionModel
    birth: BirthModel
    gate: float = GATE_CHI2
    prune_r: float = 1e-4
    merge_gate: float = 1.0
    report_threshold: float = 0.5
    detection_mode: str = "mean"
    marginal_mode: str = "auto"
    on_unexplained: str = "drop"
    state: MultiBernoulli = field(default_factory=MultiBernoulli)

    def predict(self) -> MultiBernoulli:
        self.state = predict(self.state, self.motion, self.birth)
        return self.state

    def update(self, measurements: Sequence, sensors: Sequence[SensorModel], positions) -> MultiBernoulli:
        """Sequential update with one measurement set per sensor, then reduction."""
        for Z, sensor, pos in zip(measurements, sensors, positions):
            mbm = update_sensor(
                self.state, Z, sensor, pos, gate=self.gate,
                detection_mode=self.detection_mode, on_unexplained=self.on_unexplained,
            )
            self.state = project_to_mb(mbm, compute_marginals(mbm, self.marginal_mode))
        self.state = reduce(self.state, self.prune_r, self.merge_gate)
        return self.state

    def estimate(self) -> np.ndarray:
        return estimate(self.state, self.report_threshold)
