import numpy as np
import pytest

from koopcompress import cartpole
from koopcompress.cartpole import CartPoleParams


@pytest.fixture
def params():
    return CartPoleParams()


def test_upright_equilibrium_is_exact_fixed_point(params):
    out = cartpole.step(params, np.zeros(4), 0.0)
    assert np.array_equal(out, np.zeros(4))


def test_hanging_equilibrium_is_fixed_point(params):
    state = np.array([0.0, np.pi, 0.0, 0.0])
    out = cartpole.step(params, state, 0.0)
    assert out == pytest.approx(state, abs=1e-12)


def test_positive_force_sign_convention(params):
    out = cartpole.step(params, np.zeros(4), params.force_magnitude)
    assert out[2] > 0.0   # cart accelerates rightward
    assert out[3] < 0.0   # pole reacts by tilting the other way


def test_step_rejects_nonsense(params):
    with pytest.raises(ValueError):
        cartpole.step(params, [np.inf, 0, 0, 0], 0.0)
    with pytest.raises(ValueError):
        cartpole.step(params, np.zeros(4), 2.0 * params.force_magnitude)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        CartPoleParams(pole_mass=0.0)
    with pytest.raises(ValueError):
        CartPoleParams(dt=-0.05)


def test_default_grid_is_100_steps(params):
    assert params.n_steps == 100


def test_blow_up_is_reported(params):
    with pytest.raises(cartpole.SimulationBlowUpError):
        cartpole.step(params, [0.0, 0.0, 0.0, 1e200], 0.0)


def test_total_energy_hand_value(params):
    # 0.5*(M+m)*xd^2 + m*l*xd*td*cos(t) + (2/3)*m*l^2*td^2 + m*g*l*cos(t)
    # at (0, 0, 1, 2): 0.55 + 0.1 + 1/15 + 0.49
    expect = 0.55 + 0.1 + 1.0 / 15.0 + 0.49
    assert cartpole.total_energy(params, [0.0, 0.0, 1.0, 2.0]) == pytest.approx(
        expect, rel=1e-15)


def test_free_dynamics_conserve_energy(params):
    state = np.array([0.0, np.pi - 0.1, 0.0, 0.0])
    e0 = cartpole.total_energy(params, state)
    for _ in range(100):
        state = cartpole.step(params, state, 0.0)
        drift = abs(cartpole.total_energy(params, state) - e0) / abs(e0)
        assert drift < 1e-6


def test_controller_is_bang_bang_on_angle(params):
    assert cartpole.control(params, [0.0, 0.1, 0.0, 0.0]) == params.force_magnitude
    assert cartpole.control(params, [0.0, -0.1, 0.0, 0.0]) == -params.force_magnitude
    # symmetric state: tie broken toward +force
    assert cartpole.control(params, np.zeros(4)) == params.force_magnitude
    # rate term can override a small angle
    assert cartpole.control(params, [0.0, 0.01, 0.0, -1.0]) == -params.force_magnitude


def test_controller_keeps_pole_up_from_small_perturbations(params):
    rng = np.random.default_rng(314)
    for _ in range(20):
        x0 = rng.uniform(-0.05, 0.05, size=4)
        traj = cartpole.simulate(params, x0, 100)
        assert np.max(np.abs(traj[:, 1])) < 0.5


def test_generate_trajectories_deterministic(params):
    a = cartpole.generate_trajectories(params, 3, seed=11)
    b = cartpole.generate_trajectories(params, 3, seed=11)
    c = cartpole.generate_trajectories(params, 3, seed=12)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (3, params.n_steps + 1, 4)
    assert np.max(np.abs(a[:, 0, :])) <= cartpole.INIT_NOISE


def test_snapshot_pairs_chain_within_trajectory(params):
    trajs = cartpole.generate_trajectories(params, 2, seed=5)
    pairs = cartpole.snapshot_pairs(trajs)
    n = params.n_steps
    assert pairs.count == 2 * n
    for k in range(n - 1):
        assert np.array_equal(pairs.before[k + 1], pairs.after[k])
    # no chaining across the trajectory boundary
    assert not np.array_equal(pairs.before[n], pairs.after[n - 1])


def test_pair_counts_match_trajectory_budget():
    p = CartPoleParams()
    assert cartpole.generate_dataset(p, 1, seed=0).count == 100
    assert cartpole.generate_dataset(p, 100, seed=0).count == 10_000


def test_two_step_horizon_pairs():
    p = CartPoleParams(horizon=0.1)  # 2 steps at dt = 0.05
    pairs = cartpole.generate_dataset(p, 1, seed=9)
    assert pairs.count == 2
    assert np.array_equal(pairs.before[1], pairs.after[0])


def test_csv_round_trip_is_exact(params, tmp_path):
    trajs = cartpole.generate_trajectories(params, 2, seed=21)
    path = tmp_path / "trajs.csv"
    cartpole.save_trajectories(path, trajs)
    back = cartpole.load_trajectories(path)
    assert np.array_equal(back, trajs)


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c,d,traj_id,step_id\n0,0,0,0,0,0\n")
    with pytest.raises(ValueError):
        cartpole.load_trajectories(path)
