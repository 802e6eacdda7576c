"""Optimization drivers: gradient descent, nonlinear CG, and online SGD.

Batch solvers stop when the train mean squared error drops below a
threshold or an iteration cap is hit, mirroring the synthetic experiment
protocol; optional early stopping watches a validation set. The online
solver samples frontal slices uniformly and follows the decaying schedule
gamma_k = gamma0 / (1 + gamma0 * lambda * k) with gamma0 chosen in a
pre-training phase.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import Geometry, TuckerPoint, random_point
from .linalg import RankDeficiencyError
from .problem import (
    CompletionInstance,
    DegenerateDirectionError,
    cost,
    mse,
    riemannian_grad,
    slice_gradient,
    step_size_guess,
)

__all__ = [
    "SgdConfig",
    "sgd_step_size",
    "SolverConfig",
    "TraceRecord",
    "SolverTrace",
    "LinesearchError",
    "PretrainError",
    "gradient_descent",
    "conjugate_gradient",
    "sgd",
    "pretrain_gamma0",
]

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "wall_seconds", "train_mse", "test_mse", "grad_norm", "step_size", "beta")


class LinesearchError(RuntimeError):
    """Backtracking exhausted its halving budget."""


class PretrainError(RuntimeError):
    """No pre-training step-size candidate produced a finite error."""


def sgd_step_size(gamma0: float, decay: float, k: int) -> float:
    """Decaying schedule gamma0 / (1 + gamma0 * decay * k) for update k."""
    return gamma0 / (1.0 + gamma0 * decay * k)


@dataclass
class SgdConfig:
    """Online solver knobs.

    gamma0 skips pre-training when set; otherwise the candidate with the
    lowest pre-training error wins. ``decay`` is the lambda of the schedule
    gamma_k = gamma0 / (1 + gamma0 * lambda * k).
    """

    gamma0_candidates: tuple = (8.0, 9.0, 10.0, 11.0, 12.0)
    decay: float = 1e-7
    epochs: int = 100
    pretrain_fraction: float = 0.1
    gamma0: Optional[float] = None


@dataclass
class SolverConfig:
    max_iters: int = 250
    train_mse_tol: float = 1e-12
    backtrack: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 50
    cg_beta_rule: str = "HS+"
    metric_mode: str = "preconditioned"
    seed: int = 0
    sgd: SgdConfig = field(default_factory=SgdConfig)
    validation_early_stop: bool = False
    coupled_tol: float = 1e-10
    coupled_max_iter: int = 100
    debug_checks: bool = False

    def __post_init__(self):
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack contraction must lie in (0, 1)")
        if not (0.0 < self.sufficient_decrease < 1.0):
            raise ValueError("sufficient decrease must lie in (0, 1)")
        if self.train_mse_tol < 0:
            raise ValueError("train_mse_tol must be nonnegative")
        if self.cg_beta_rule not in ("HS+", "PR+"):
            raise ValueError("cg_beta_rule must be 'HS+' or 'PR+'")

    def geometry(self) -> Geometry:
        return Geometry(self.metric_mode, self.coupled_tol, self.coupled_max_iter)


@dataclass
class TraceRecord:
    iter: int
    wall_seconds: float
    train_mse: float
    test_mse: Optional[float]
    grad_norm: Optional[float]
    step_size: Optional[float]
    beta: Optional[float]


@dataclass
class SolverTrace:
    """Per-iteration log plus the reason the solve ended."""

    records: List[TraceRecord] = field(default_factory=list)
    reason: str = ""

    @property
    def iterations(self) -> int:
        return self.records[-1].iter if self.records else 0

    def train_mses(self):
        return np.array([r.train_mse for r in self.records])

    def test_mses(self):
        return np.array(
            [math.nan if r.test_mse is None else r.test_mse for r in self.records]
        )

    def iterations_to(self, level) -> Optional[int]:
        """First iteration at which the train error is at most `level`."""
        for r in self.records:
            if r.train_mse <= level:
                return r.iter
        return None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for r in self.records:
                writer.writerow(
                    [
                        r.iter,
                        "%.6f" % r.wall_seconds,
                        "%.17g" % r.train_mse,
                        "" if r.test_mse is None else "%.17g" % r.test_mse,
                        "" if r.grad_norm is None else "%.17g" % r.grad_norm,
                        "" if r.step_size is None else "%.17g" % r.step_size,
                        "" if r.beta is None else "%.17g" % r.beta,
                    ]
                )


def _test_mse(x, inst):
    if inst.test is None or inst.test.nnz == 0:
        return None
    return mse(x, inst.test)


def _validation_mse(x, inst):
    if inst.validation is None or inst.validation.nnz == 0:
        return None
    return mse(x, inst.validation)


def _trial_step(x, inst, direction):
    try:
        s = step_size_guess(x, inst, direction)
    except DegenerateDirectionError:
        return 1.0
    return s if s > 0 else 1.0


def _armijo(geom, inst, x, f0, direction, slope, s0, cfg):
    """Backtrack until f(retract(x, d, s)) <= f0 + c1 * s * slope.

    Returns (step, new point, new cost) or raises LinesearchError after the
    halving budget runs out.
    """
    s = s0
    for _ in range(cfg.max_backtracks):
        cand = geom.retract(x, direction, s)
        fc = cost(cand, inst)
        if fc <= f0 + cfg.sufficient_decrease * s * slope:
            return s, cand, fc
        s *= cfg.backtrack
    raise LinesearchError("no sufficient decrease within %d halvings" % cfg.max_backtracks)


def _debug_check_point(x: TuckerPoint):
    for d, u in enumerate(x.factors, start=1):
        defect = np.linalg.norm(u.T @ u - np.eye(u.shape[1]))
        if defect > 1e-10:
            raise AssertionError("iterate factor %d lost orthonormality (%.3e)" % (d, defect))


def gradient_descent(inst: CompletionInstance, cfg: SolverConfig = None, x0=None):
    """Riemannian steepest descent with Armijo backtracking.

    The search direction is the negative gradient in the configured metric;
    the trial step comes from the linearized exact minimizer. Returns
    (point, trace); the cost sequence is non-increasing.
    """
    cfg = cfg or SolverConfig()
    geom = cfg.geometry()
    x = x0 if x0 is not None else random_point(inst.dims, inst.rank.astuple(), cfg.seed)
    start = time.perf_counter()
    f = cost(x, inst)
    trace = SolverTrace()
    trace.records.append(
        TraceRecord(0, time.perf_counter() - start, f, _test_mse(x, inst), None, None, None)
    )
    reason = "max iterations"
    for it in range(1, cfg.max_iters + 1):
        if f <= cfg.train_mse_tol:
            reason = "train mse tolerance"
            break
        g = riemannian_grad(x, inst, geom)
        gnorm2 = geom.metric(x, g, g)
        direction = g.scaled(-1.0)
        s0 = _trial_step(x, inst, direction)
        try:
            s, x, f = _armijo(geom, inst, x, f, direction, -gnorm2, s0, cfg)
        except LinesearchError:
            reason = "linesearch failure"
            break
        trace.records.append(
            TraceRecord(
                it, time.perf_counter() - start, f, _test_mse(x, inst),
                math.sqrt(max(gnorm2, 0.0)), s, None,
            )
        )
        if cfg.debug_checks and it % 10 == 0:
            _debug_check_point(x)
    else:
        if f <= cfg.train_mse_tol:
            reason = "train mse tolerance"
    trace.reason = reason
    return x, trace


def conjugate_gradient(inst: CompletionInstance, cfg: SolverConfig = None, x0=None):
    """Riemannian nonlinear conjugate gradient.

    Directions combine the new gradient with the transported previous
    direction, with the HS+ rule by default (PR+ available); beta is clipped
    at zero and the direction resets to steepest descent whenever it stops
    being a descent direction. Stops on the train tolerance, the iteration
    cap, or, when enabled, the first increase of the validation error (the
    pre-increase iterate is returned).
    """
    cfg = cfg or SolverConfig()
    geom = cfg.geometry()
    x = x0 if x0 is not None else random_point(inst.dims, inst.rank.astuple(), cfg.seed)
    start = time.perf_counter()
    f = cost(x, inst)
    trace = SolverTrace()
    trace.records.append(
        TraceRecord(0, time.perf_counter() - start, f, _test_mse(x, inst), None, None, None)
    )
    val_prev = _validation_mse(x, inst) if cfg.validation_early_stop else None

    g = None
    direction = None
    beta = 0.0
    reason = "max iterations"
    for it in range(1, cfg.max_iters + 1):
        if f <= cfg.train_mse_tol:
            reason = "train mse tolerance"
            break
        if g is None:
            g = riemannian_grad(x, inst, geom)
            direction = g.scaled(-1.0)
            beta = 0.0
        gnorm2 = geom.metric(x, g, g)
        slope = geom.metric(x, g, direction)
        if slope >= 0.0:
            direction = g.scaled(-1.0)
            slope = -gnorm2
            beta = 0.0
        s0 = _trial_step(x, inst, direction)
        try:
            s, x_new, f_new = _armijo(geom, inst, x, f, direction, slope, s0, cfg)
        except LinesearchError:
            reason = "linesearch failure"
            break

        g_new = riemannian_grad(x_new, inst, geom)
        step_taken = direction.scaled(s)
        g_moved = geom.transport(x, step_taken, x_new, g)
        d_moved = geom.transport(x, step_taken, x_new, direction)
        y = g_new.plus(g_moved, -1.0)
        if cfg.cg_beta_rule == "HS+":
            denom = geom.metric(x_new, d_moved, y)
            beta_next = geom.metric(x_new, g_new, y) / denom if denom != 0.0 else 0.0
        else:  # PR+
            beta_next = geom.metric(x_new, g_new, y) / gnorm2 if gnorm2 > 0.0 else 0.0
        beta_next = max(beta_next, 0.0)
        direction = g_new.scaled(-1.0).plus(d_moved, beta_next)

        trace.records.append(
            TraceRecord(
                it, time.perf_counter() - start, f_new, _test_mse(x_new, inst),
                math.sqrt(max(geom.metric(x_new, g_new, g_new), 0.0)), s, beta,
            )
        )
        beta = beta_next
        if cfg.debug_checks and it % 10 == 0:
            _debug_check_point(x_new)

        if cfg.validation_early_stop and inst.validation is not None:
            val_now = _validation_mse(x_new, inst)
            if val_prev is not None and val_now is not None and val_now > val_prev:
                reason = "validation increase"
                trace.reason = reason
                return x, trace  # keep the pre-increase iterate
            val_prev = val_now

        x, f, g = x_new, f_new, g_new
    else:
        if f <= cfg.train_mse_tol:
            reason = "train mse tolerance"
    trace.reason = reason
    return x, trace


def _slice_groups(train):
    """Row positions of the training entries per frontal slice."""
    order = np.argsort(train.i3, kind="stable")
    sorted_i3 = train.i3[order]
    groups = [np.empty(0, dtype=np.int64)] * train.dims[2]
    if order.size:
        bounds = np.searchsorted(sorted_i3, np.arange(train.dims[2] + 1))
        for k in range(train.dims[2]):
            groups[k] = order[bounds[k]:bounds[k + 1]]
    return groups


def sgd(inst: CompletionInstance, cfg: SolverConfig = None, x0=None):
    """Stochastic gradient descent over randomly sampled frontal slices.

    Each update draws a slice uniformly at random (with replacement),
    computes its gradient in the configured metric, and retracts along the
    negative direction with step gamma_k = gamma0 / (1 + gamma0 * lambda * k),
    k counting updates. One epoch is n3 draws; the trace carries one record
    per epoch. Empty slices are skipped with a logged warning and do not
    advance the schedule. There is no linesearch safeguard; a non-finite
    train error aborts with reason "diverged".
    """
    cfg = cfg or SolverConfig()
    geom = cfg.geometry()
    x = x0 if x0 is not None else random_point(inst.dims, inst.rank.astuple(), cfg.seed)
    gamma0 = cfg.sgd.gamma0
    if gamma0 is None:
        gamma0 = pretrain_gamma0(inst, cfg, x0=x)
    lam = cfg.sgd.decay
    n3 = inst.dims[2]
    groups = _slice_groups(inst.train)
    slices = [inst.train.take(rows) if rows.size else None for rows in groups]
    warned_empty = False

    rng = np.random.default_rng([cfg.seed, 0x5D1CE])
    start = time.perf_counter()
    trace = SolverTrace()
    trace.records.append(
        TraceRecord(0, time.perf_counter() - start, cost(x, inst), _test_mse(x, inst), None, None, None)
    )
    reason = "epochs completed"
    k = 0
    gamma = gamma0
    for epoch in range(1, cfg.sgd.epochs + 1):
        diverged = False
        for _ in range(n3):
            j = int(rng.integers(n3))
            sl = slices[j]
            if sl is None:
                if not warned_empty:
                    logger.warning("skipping empty frontal slice %d", j)
                    warned_empty = True
                continue
            gamma = sgd_step_size(gamma0, lam, k)
            try:
                grad = slice_gradient(x, sl, geom)
                x = geom.retract(x, grad.scaled(-1.0), gamma)
            except (np.linalg.LinAlgError, RankDeficiencyError, FloatingPointError):
                diverged = True
                break
            k += 1
        f = cost(x, inst)
        trace.records.append(
            TraceRecord(epoch, time.perf_counter() - start, f, _test_mse(x, inst), None, gamma, None)
        )
        if diverged or not math.isfinite(f):
            reason = "diverged"
            break
        if f <= cfg.train_mse_tol:
            reason = "train mse tolerance"
            break
    trace.reason = reason
    return x, trace


def pretrain_gamma0(inst: CompletionInstance, cfg: SolverConfig = None, x0=None) -> float:
    """Pick gamma0 by one pass over the leading fraction of slices.

    Every candidate starts from the same point and sees the same slice draw
    sequence; the candidate with the lowest train error on the pre-training
    subset wins. Candidates that diverge (non-finite error or a degenerate
    iterate) are discarded; if none survive an error lists them all.
    """
    cfg = cfg or SolverConfig()
    geom = cfg.geometry()
    candidates = tuple(cfg.sgd.gamma0_candidates)
    if not candidates:
        raise ValueError("gamma0_candidates must be non-empty")
    x_init = x0 if x0 is not None else random_point(inst.dims, inst.rank.astuple(), cfg.seed)
    n3 = inst.dims[2]
    m = max(1, int(round(cfg.sgd.pretrain_fraction * n3)))
    head = np.flatnonzero(inst.train.i3 < m)
    if head.size == 0:
        raise ValueError("pre-training slices hold no observations")
    sub = inst.train.take(head)
    groups = _slice_groups(sub)
    slices = [sub.take(rows) if rows.size else None for rows in groups[:m]]

    rng = np.random.default_rng([cfg.seed, 0x9E37])
    draws = rng.integers(0, m, size=m)
    lam = cfg.sgd.decay

    scores = []
    for gamma0 in candidates:
        x = x_init
        score = math.inf
        try:
            for k, j in enumerate(draws):
                sl = slices[int(j)]
                if sl is None:
                    continue
                gamma = sgd_step_size(gamma0, lam, k)
                grad = slice_gradient(x, sl, geom)
                x = geom.retract(x, grad.scaled(-1.0), gamma)
            err = mse(x, sub)
            if math.isfinite(err):
                score = err
        except (FloatingPointError, np.linalg.LinAlgError, ValueError):
            score = math.inf
        scores.append(score)
    best = int(np.argmin(scores))
    if not math.isfinite(scores[best]):
        raise PretrainError(
            "every gamma0 candidate diverged during pre-training: %s" % (candidates,)
        )
    return float(candidates[best])
