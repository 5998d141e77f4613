"""Accuracy, timing, and storage-size reports for rollout predictors.

Every prediction backend (full Koopman matrix, co-cluster compressed
operators, truncated SVD factors, the reference simulator) is wrapped in a
small Predictor record exposing a common rollout call plus the raw
one-step operation used for latency measurement.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import cartpole, compress, edmd, svd_baseline
from .cartpole import STATE_COLUMNS, CartPoleParams
from .compress import CompressedKoopman
from .dictionary import Dictionary
from .edmd import KoopmanMatrix
from .svd_baseline import SvdFactors

MIN_TIMING_STEPS = 10_000


class EmptyDatasetError(ValueError):
    """Accuracy evaluation needs at least one trajectory."""


@dataclass(frozen=True)
class Predictor:
    """Uniform interface over the prediction backends.

    predict(initial, steps) returns (steps, 4); row t is the state
    predicted t + 1 steps ahead, NaN from the first divergent step on.
    step_op is the bare one-step update on a vector of size step_dim and
    is what the timing benchmark drives; element_count is the stored
    matrix-element budget (None when storage is not meaningful, as for
    the simulator).
    """

    name: str
    predict: Callable[[np.ndarray, int], np.ndarray]
    step_op: Callable[[np.ndarray], np.ndarray]
    step_init: np.ndarray
    element_count: int | None = None

    @property
    def step_dim(self) -> int:
        return self.step_init.shape[0]


def _unit_seed_vector(dim: int) -> np.ndarray:
    vec = np.random.default_rng(dim).standard_normal(dim)
    return vec / np.linalg.norm(vec)


def full_predictor(km: KoopmanMatrix, dic: Dictionary,
                   name: str = "full") -> Predictor:
    return Predictor(
        name=name,
        predict=lambda initial, steps: edmd.rollout(km, dic, initial, steps),
        step_op=lambda v: km.k @ v,
        step_init=_unit_seed_vector(km.dim),
        element_count=km.dim * km.dim,
    )


def compressed_predictor(ck: CompressedKoopman, dic: Dictionary,
                         mode: str = "after",
                         name: str | None = None) -> Predictor:
    """Wrap compressed operators; the iterated square matrix is what gets
    timed and counted (K'_A for mode "after", K'_B for "before")."""
    op = ck.k_a if mode == "after" else ck.k_b
    if name is None:
        if ck.ratios is not None:
            name = f"ratio-{ck.ratios[0]:g}-{ck.ratios[1]:g}"
        else:
            name = f"compressed-{op.shape[0]}"
    return Predictor(
        name=name,
        predict=lambda initial, steps: compress.rollout(
            ck, dic, initial, steps, mode=mode),
        step_op=lambda v: op @ v,
        step_init=_unit_seed_vector(op.shape[0]),
        element_count=op.size,
    )


def svd_predictor(factors: SvdFactors, dic: Dictionary,
                  name: str | None = None) -> Predictor:
    if name is None:
        name = f"svd-{factors.rank}"
    return Predictor(
        name=name,
        predict=lambda initial, steps: svd_baseline.rollout(
            factors, dic, initial, steps),
        step_op=lambda v: factors.left @ (factors.right @ v),
        step_init=_unit_seed_vector(factors.dim),
        element_count=factors.element_count,
    )


def simulator_predictor(params: CartPoleParams,
                        name: str = "simulator") -> Predictor:
    """Ground-truth integrator wrapped as a predictor.

    Self-comparison gives exactly zero error; its timing situates the
    matrix predictors against the cost of just simulating.
    """
    return Predictor(
        name=name,
        predict=lambda initial, steps: cartpole.simulate(
            params, initial, steps, controlled=True)[1:],
        step_op=lambda s: cartpole.step(params, s, cartpole.control(params, s)),
        step_init=np.array([0.0, 0.05, 0.0, 0.0]),
        element_count=None,
    )


@dataclass(frozen=True)
class AccuracyReport:
    """Per-step squared-error statistics across an evaluation set.

    mse and the quartile arrays have shape (horizon, n_components); rows
    where no trajectory produced a finite prediction hold NaN and the
    per-step n_valid records how many did.
    """

    predictor: str
    horizon: int
    components: tuple[str, ...]
    mse: np.ndarray
    q25: np.ndarray
    q50: np.ndarray
    q75: np.ndarray
    n_valid: np.ndarray

    def __post_init__(self):
        shape = (self.horizon, len(self.components))
        for arr in (self.mse, self.q25, self.q50, self.q75):
            if arr.shape != shape:
                raise ValueError("statistic arrays must be horizon x components")
        if self.n_valid.shape != (self.horizon,):
            raise ValueError("n_valid must have one entry per step")

    def component_index(self, component: str) -> int:
        try:
            return self.components.index(component)
        except ValueError:
            raise KeyError(f"unknown state component {component!r}") from None

    def horizon_mean(self, component: str) -> float:
        """Mean over steps of the per-step MSE.

        Steps where every rollout had already gone non-finite carry no
        number and are skipped; infinite MSE (squared error overflowing
        double precision) is kept, so a numerically exploding predictor
        averages to inf rather than looking good on its early steps. NaN
        if no step has data at all.
        """
        col = self.mse[:, self.component_index(component)]
        present = col[~np.isnan(col)]
        return float(present.mean()) if present.size else float("nan")


def evaluate_accuracy(predictor: Predictor, trajectories: np.ndarray,
                      horizon: int | None = None) -> AccuracyReport:
    """Squared error of rollouts against stored true trajectories.

    trajectories has shape (n, T + 1, 4) with row 0 the initial state.
    Each rollout starts from that initial state and is compared step by
    step; means and quartiles are taken across the trajectories whose
    prediction is still finite at that step.
    """
    trajectories = np.asarray(trajectories, dtype=np.float64)
    if trajectories.ndim != 3 or trajectories.shape[0] == 0:
        raise EmptyDatasetError("need a non-empty (n, steps + 1, 4) array")
    max_horizon = trajectories.shape[1] - 1
    if horizon is None:
        horizon = max_horizon
    if not 1 <= horizon <= max_horizon:
        raise ValueError(f"horizon must be in [1, {max_horizon}]")

    n = trajectories.shape[0]
    preds = np.stack([predictor.predict(trajectories[i, 0], horizon)
                      for i in range(n)])
    truth = trajectories[:, 1:horizon + 1, :]
    # Predictions can be finite yet astronomically large; the squared
    # error then overflows to inf, which is the honest statistic.
    with np.errstate(over="ignore", invalid="ignore"):
        squared = (preds - truth) ** 2
    valid = np.all(np.isfinite(preds), axis=2)

    n_comp = trajectories.shape[2]
    mse = np.full((horizon, n_comp), np.nan)
    quarts = [np.full((horizon, n_comp), np.nan) for _ in range(3)]
    n_valid = valid.sum(axis=0).astype(np.int64)
    for t in range(horizon):
        if n_valid[t] == 0:
            continue
        vals = squared[valid[:, t], t, :]
        mse[t] = vals.mean(axis=0)
        # Lower order statistics instead of interpolated percentiles:
        # interpolating between two inf samples would manufacture NaN.
        q = np.percentile(vals, [25, 50, 75], axis=0, method="lower")
        for arr, row in zip(quarts, q):
            arr[t] = row
    return AccuracyReport(predictor=predictor.name, horizon=horizon,
                          components=tuple(STATE_COLUMNS), mse=mse,
                          q25=quarts[0], q50=quarts[1], q75=quarts[2],
                          n_valid=n_valid)


@dataclass(frozen=True)
class TimingReport:
    """Per-step latency of one predictor's square update."""

    predictor: str
    n_steps: int
    mean_ms: float
    median_ms: float
    batch_means_ms: tuple[float, ...]

    def __post_init__(self):
        if self.mean_ms <= 0.0 or self.median_ms <= 0.0:
            raise ValueError("per-step times must be positive")
        if self.n_steps < MIN_TIMING_STEPS:
            raise ValueError(f"timing needs >= {MIN_TIMING_STEPS} steps")


def _timed_batch(step_op, vec: np.ndarray, reset: np.ndarray,
                 n_steps: int) -> tuple[float, np.ndarray]:
    start = time.perf_counter()
    for _ in range(n_steps):
        vec = step_op(vec)
        # Constant-cost renormalization keeps long loops out of overflow
        # and denormal territory, where hardware slows down; every
        # predictor pays the same guard.
        norm = np.linalg.norm(vec)
        if norm > 0.0 and np.isfinite(norm):
            vec = vec / norm
        else:
            vec = reset
    return time.perf_counter() - start, vec


def benchmark_timing(predictor: Predictor,
                     n_steps: int = MIN_TIMING_STEPS,
                     batches: int = 5,
                     warmup_steps: int = 200) -> TimingReport:
    """Mean wall-clock time per one-step update over n_steps applications.

    The loop is pinned to one thread so BLAS parallelism cannot blur the
    size-dependent cost. n_steps is split into `batches` consecutive
    batches; the overall mean is reported together with the median of the
    per-batch means, which is robust against a single scheduling hiccup.
    Warm-up applications are excluded.
    """
    if n_steps < MIN_TIMING_STEPS:
        raise ValueError(f"timing needs >= {MIN_TIMING_STEPS} steps")
    if batches < 1:
        raise ValueError("batches must be >= 1")
    base, rem = divmod(n_steps, batches)
    batch_steps = [base + (1 if i < rem else 0) for i in range(batches)]
    reset = predictor.step_init
    with threadpool_limits(limits=1):
        _, vec = _timed_batch(predictor.step_op, reset, reset,
                              min(warmup_steps, n_steps))
        total = 0.0
        batch_means = []
        for steps in batch_steps:
            elapsed, vec = _timed_batch(predictor.step_op, vec, reset, steps)
            total += elapsed
            batch_means.append(1e3 * elapsed / steps)
    return TimingReport(predictor=predictor.name, n_steps=n_steps,
                        mean_ms=1e3 * total / n_steps,
                        median_ms=float(np.median(batch_means)),
                        batch_means_ms=tuple(batch_means))


@dataclass(frozen=True)
class SizeReport:
    """Stored matrix-element count per predictor label."""

    counts: dict[str, int]

    def __post_init__(self):
        for label, count in self.counts.items():
            if count <= 0:
                raise ValueError(f"element count for {label!r} must be positive")


def count_elements(predictors: Sequence[Predictor]) -> SizeReport:
    """Collect element counts; predictors without a storage notion (the
    simulator) are left out."""
    return SizeReport(counts={p.name: p.element_count for p in predictors
                              if p.element_count is not None})


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_accuracy_csv(path, reports: Sequence[AccuracyReport]) -> None:
    """One row per predictor, state component, and step (1-based)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predictor", "component", "step", "mse",
                         "q25", "q50", "q75", "n_valid"])
        for rep in reports:
            for ci, comp in enumerate(rep.components):
                for t in range(rep.horizon):
                    writer.writerow([
                        rep.predictor, comp, t + 1,
                        _fmt(rep.mse[t, ci]), _fmt(rep.q25[t, ci]),
                        _fmt(rep.q50[t, ci]), _fmt(rep.q75[t, ci]),
                        int(rep.n_valid[t]),
                    ])


def _nan_to_none(value: float):
    return float(value) if np.isfinite(value) else None


def accuracy_summary(reports: Sequence[AccuracyReport]) -> dict:
    """Horizon-averaged MSE per component plus end-of-horizon validity."""
    out = {}
    for rep in reports:
        out[rep.predictor] = {
            "horizon": rep.horizon,
            "mse_mean": {comp: _nan_to_none(rep.horizon_mean(comp))
                         for comp in rep.components},
            "n_valid_final": int(rep.n_valid[-1]),
        }
    return out


def write_accuracy_summary(path, reports: Sequence[AccuracyReport]) -> None:
    with open(path, "w") as fh:
        json.dump(accuracy_summary(reports), fh, indent=2, sort_keys=True)
