"""Cart-pole simulation and snapshot-pair dataset generation.

The state vector is [x, theta, x_dot, theta_dot] with theta measured from
the upright position. With this convention a positive (rightward) force
accelerates the cart in +x and drives theta negative. The dynamics are the
standard frictionless cart-pole with the pole modelled as a uniform rod
pivoting at its base.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

STATE_COLUMNS = ("x", "theta", "x_dot", "theta_dot")

# Gain on theta_dot in the bang-bang switching rule.
CONTROL_RATE_GAIN = 0.25

# Initial-state perturbation half-width for dataset generation. Episodes
# restart from the origin; without it a deterministic controller would
# produce identical trajectories and a rank-deficient dataset. The width
# trades data diversity against excursion size; 0.1 keeps the pole within
# the stabilizable region while exciting enough directions that low-rank
# truncations of the fitted operator are visibly lossy.
INIT_NOISE = 0.1


class SimulationBlowUpError(RuntimeError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class CartPoleParams:
    """Physical constants and simulation grid.

    Defaults are the community-standard cart-pole constants; dt and horizon
    give 100 steps per episode.
    """

    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    gravity: float = 9.8
    force_magnitude: float = 10.0
    dt: float = 0.05
    horizon: float = 5.0

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_half_length", "gravity",
                     "force_magnitude", "dt", "horizon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def n_steps(self) -> int:
        """Steps per episode (horizon / dt)."""
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class SnapshotPairs:
    """Paired states before and after one time step, stacked over episodes."""

    before: np.ndarray  # (s, 4)
    after: np.ndarray   # (s, 4)

    def __post_init__(self):
        if self.before.shape != self.after.shape or self.before.ndim != 2:
            raise ValueError("before/after must be equal-shape (s, 4) arrays")
        if len(self.before) < 1:
            raise ValueError("need at least one snapshot pair")

    @property
    def count(self) -> int:
        return len(self.before)


def _derivatives(p: CartPoleParams, state: np.ndarray, force: float) -> np.ndarray:
    """Time derivative of [x, theta, x_dot, theta_dot]."""
    _, theta, x_dot, theta_dot = state
    sin_t = np.sin(theta)
    cos_t = np.cos(theta)
    total_mass = p.cart_mass + p.pole_mass
    ml = p.pole_mass * p.pole_half_length
    temp = (force + ml * theta_dot**2 * sin_t) / total_mass
    theta_acc = (p.gravity * sin_t - cos_t * temp) / (
        p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t**2 / total_mass)
    )
    x_acc = temp - ml * theta_acc * cos_t / total_mass
    return np.array([x_dot, theta_dot, x_acc, theta_acc])


def step(p: CartPoleParams, state, force: float) -> np.ndarray:
    """Advance one time step with RK4, holding the force constant.

    Raises SimulationBlowUpError if the result is non-finite; blow-ups are
    reported, never clamped.
    """
    s = np.asarray(state, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("state must be finite")
    if abs(force) > p.force_magnitude:
        raise ValueError(f"|force| exceeds the limit {p.force_magnitude}")
    h = p.dt
    # Overflow inside the stages is detected on the result and raised below,
    # so numpy's own warnings are redundant here.
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _derivatives(p, s, force)
        k2 = _derivatives(p, s + 0.5 * h * k1, force)
        k3 = _derivatives(p, s + 0.5 * h * k2, force)
        k4 = _derivatives(p, s + h * k3, force)
        out = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationBlowUpError("integration step produced non-finite state")
    return out


def control(p: CartPoleParams, state) -> float:
    """Bang-bang stabilizing force from the pole angle and rate.

    Pushes the cart under the falling pole: +force when theta + gain *
    theta_dot >= 0 (tie broken toward +force), -force otherwise.
    """
    _, theta, _, theta_dot = np.asarray(state, dtype=np.float64)
    if theta + CONTROL_RATE_GAIN * theta_dot >= 0.0:
        return p.force_magnitude
    return -p.force_magnitude


def simulate(p: CartPoleParams, initial, n_steps: int,
             controlled: bool = True) -> np.ndarray:
    """Roll out n_steps from an initial state; returns (n_steps + 1, 4).

    With controlled=False the force is identically zero (free dynamics).
    """
    states = np.empty((n_steps + 1, 4))
    states[0] = np.asarray(initial, dtype=np.float64)
    for t in range(n_steps):
        force = control(p, states[t]) if controlled else 0.0
        states[t + 1] = step(p, states[t], force)
    return states


def total_energy(p: CartPoleParams, state) -> float:
    """Mechanical energy of the uncontrolled system (rod pole).

    Conserved by the free dynamics; used as an integrator sanity check.
    """
    _, theta, x_dot, theta_dot = np.asarray(state, dtype=np.float64)
    m, mc, length = p.pole_mass, p.cart_mass, p.pole_half_length
    kinetic = (
        0.5 * (mc + m) * x_dot**2
        + m * length * x_dot * theta_dot * np.cos(theta)
        + (2.0 / 3.0) * m * length**2 * theta_dot**2
    )
    potential = m * p.gravity * length * np.cos(theta)
    return float(kinetic + potential)


def generate_trajectories(p: CartPoleParams, n_trajectories: int,
                          seed: int) -> np.ndarray:
    """Controlled rollouts from perturbed origins; returns (n, steps+1, 4).

    Each episode starts from the origin plus uniform noise in
    [-INIT_NOISE, INIT_NOISE] on every component, drawn from a generator
    seeded with `seed`, so identical (params, seed) give bit-identical
    datasets. A blow-up is re-raised naming the trajectory index.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n_trajectories, p.n_steps + 1, 4))
    for i in range(n_trajectories):
        x0 = rng.uniform(-INIT_NOISE, INIT_NOISE, size=4)
        try:
            out[i] = simulate(p, x0, p.n_steps)
        except SimulationBlowUpError as exc:
            raise SimulationBlowUpError(
                f"trajectory {i} blew up: {exc}") from exc
    return out


def snapshot_pairs(trajectories: np.ndarray) -> SnapshotPairs:
    """Concatenate per-trajectory (state, next state) pairs."""
    trajs = np.asarray(trajectories, dtype=np.float64)
    if trajs.ndim != 3 or trajs.shape[2] != 4 or trajs.shape[1] < 2:
        raise ValueError("expected shape (n_traj, n_states >= 2, 4)")
    before = np.concatenate([t[:-1] for t in trajs])
    after = np.concatenate([t[1:] for t in trajs])
    return SnapshotPairs(before=before, after=after)


def generate_dataset(p: CartPoleParams, n_trajectories: int,
                     seed: int) -> SnapshotPairs:
    """Generate snapshot pairs from controlled rollouts.

    With the default 100-step episodes, 100 trajectories yield exactly
    10,000 pairs.
    """
    return snapshot_pairs(generate_trajectories(p, n_trajectories, seed))


def save_trajectories(path, trajectories: np.ndarray) -> None:
    """Write trajectories as CSV, one row per state.

    Floats carry 17 significant digits so the file round-trips exactly.
    """
    trajs = np.asarray(trajectories, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(STATE_COLUMNS) + ["traj_id", "step_id"])
        for i, traj in enumerate(trajs):
            for t, row in enumerate(traj):
                writer.writerow([f"{v:.17g}" for v in row] + [i, t])


def load_trajectories(path) -> np.ndarray:
    """Read a trajectory CSV back into an (n_traj, n_states, 4) array."""
    by_traj: dict[int, dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != list(STATE_COLUMNS):
            raise ValueError(f"unexpected CSV header: {header}")
        for row in reader:
            state = [float(v) for v in row[:4]]
            traj_id, step_id = int(row[4]), int(row[5])
            by_traj.setdefault(traj_id, {})[step_id] = state
    if not by_traj:
        raise ValueError("empty trajectory file")
    n_traj = max(by_traj) + 1
    lengths = {len(steps) for steps in by_traj.values()}
    if len(by_traj) != n_traj or len(lengths) != 1:
        raise ValueError("trajectory ids or lengths are inconsistent")
    n_states = lengths.pop()
    out = np.empty((n_traj, n_states, 4))
    for i, steps in by_traj.items():
        for t in range(n_states):
            out[i, t] = steps[t]
    return out
