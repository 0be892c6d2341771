import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infogames import mfg
from infogames.errors import ConfigurationError, ShapeError, ValidationError


def small_problem(alpha=1.0, n=11, horizon=0.25, dt=0.05):
    grid = mfg.MfgGrid.uniform(n, 1.0, dt=dt, horizon=horizon, sigma=0.2, alpha=alpha)
    prob = mfg.MfgProblem(
        mfg.LinearDrift(1.0, 0.5, -1.0),
        mfg.QuadraticCost(q=1.0, target=0.3, r=1.0, coupling=0.5),
        np.array([0.0, 0.25, 0.5, 0.75, 1.0]),
    )
    x = grid.axes[0]
    m0 = np.exp(-0.5 * ((x - 0.7) / 0.15) ** 2)
    return prob, grid, m0 / m0.sum()


@pytest.mark.parametrize("alpha", [1.0, 0.7])
def test_stepwise_api_matches_whole_passes(alpha):
    prob, grid, m0 = small_problem(alpha, horizon=0.05, dt=0.005)
    sol = mfg.solve_mfg(prob, grid, m0, tol=1e-12)
    K = grid.n_steps
    # backward, one level at a time, against the converged density path
    V = [None] * (K + 1)
    V[K] = np.zeros(grid.shape)
    for k in range(K - 1, -1, -1):
        state = mfg.MfgState(V[k + 1], sol.densities[k])
        V[k] = mfg.hjb_backward_step(state, prob, grid, history=V[k + 1:])
    assert np.allclose(np.array(V), sol.values, atol=1e-12)
    # forward under the solved feedback
    M = [m0]
    for k in range(K):
        state = mfg.MfgState(np.zeros(grid.shape), M[-1])
        M.append(mfg.fpk_forward_step(state, prob, grid, policy=sol.controls[k][None], history=M[::-1]))
    assert np.allclose(np.array(M), sol.densities, atol=1e-12)


def test_heat_kernel_variance():
    # zero drift: each step adds sigma^2 dt of variance until mass nears a wall
    sigma, dt, steps = 0.2, 1e-3, 200
    grid = mfg.MfgGrid.uniform(201, 2.0, dt=dt, horizon=steps * dt, sigma=sigma)
    prob = mfg.MfgProblem(mfg.LinearDrift(1.0, 0.5), mfg.zero_cost, np.array([0.5]))
    m = np.zeros(201)
    m[100] = 1.0
    policy = np.zeros((1, 201), dtype=int)
    for _ in range(steps):
        m = mfg.fpk_forward_step(mfg.MfgState(np.zeros(201), m), prob, grid, policy=policy)
    x = grid.axes[0]
    mean = m @ x
    var = m @ (x - mean) ** 2
    assert mean == pytest.approx(1.0, abs=1e-12)
    assert var == pytest.approx(sigma**2 * steps * dt, rel=1e-9)


def test_mass_and_sign_with_memory():
    n = 64
    grid = mfg.MfgGrid.uniform(n, 1.0, dt=1e-5, horizon=0.02, sigma=0.3, alpha=0.6)
    prob = mfg.MfgProblem(mfg.LinearDrift(2.0, 0.5), mfg.QuadraticCost(coupling=1.0), np.linspace(0, 1, 5))
    rng = np.random.default_rng(0)
    m0 = rng.random(n)
    m0 /= m0.sum()
    sol = mfg.solve_mfg(prob, grid, m0, max_sweeps=3)
    assert np.max(np.abs(sol.densities.sum(axis=1) - 1.0)) < 1e-12
    assert sol.densities.min() >= 0.0


def test_particles_track_density_mean():
    prob, grid, m0 = small_problem(n=41, horizon=0.5, dt=0.005)
    sol = mfg.solve_mfg(prob, grid, m0, tol=1e-10)
    mc = mfg.simulate_particles(prob, grid, sol, m0, 1_000_000, seed=3)
    mean = sol.mean_trajectory(grid)
    assert np.max(np.abs(mc - mean) / mean) < 0.02


def test_joint_hamiltonian_is_separable_minimax():
    grid = mfg.MfgGrid.uniform((5, 6), (1.0, 1.0), dt=0.01, horizon=0.05, sigma=0.1)
    prob = mfg.MfgProblem(
        mfg.LinearDrift(1.0, 0.5, -1.0), mfg.QuadraticCost(target=0.2), np.linspace(0, 1, 3),
        mode="joint-minimax",
        drift_2=mfg.LinearDrift(1.0, 0.5, 1.0), cost_2=mfg.QuadraticCost(target=0.8, reward=True),
        controls_2=np.linspace(0, 1, 4),
    )
    rng = np.random.default_rng(0)
    V = rng.random(grid.shape)
    m = np.full(grid.shape, 1.0 / V.size)
    H, pol = mfg.hamiltonian(V, m, prob, grid)
    X1, X2 = grid.mesh
    dx1, dx2 = grid.dx
    D = grid.diffusion
    mean1, mean2 = float((m * X1).sum()), float((m * X2).sum())
    for i in range(5):
        for j in range(6):
            best_a = math.inf
            for u in prob.controls:
                b = float(prob.drift(X1[i, j], u))
                up = (max(b, 0) / dx1 + D / dx1**2) * (i < 4)
                dn = (max(-b, 0) / dx1 + D / dx1**2) * (i > 0)
                q = float(prob.cost(X1[i, j], u, mean1))
                q += up * (V[min(i + 1, 4), j] - V[i, j]) + dn * (V[max(i - 1, 0), j] - V[i, j])
                best_a = min(best_a, q)
            best_b = -math.inf
            for u in prob.controls_2:
                b = float(prob.drift_2(X2[i, j], u))
                up = (max(b, 0) / dx2 + D / dx2**2) * (j < 5)
                dn = (max(-b, 0) / dx2 + D / dx2**2) * (j > 0)
                q = float(prob.cost_2(X2[i, j], u, mean2))
                q += up * (V[i, min(j + 1, 5)] - V[i, j]) + dn * (V[i, max(j - 1, 0)] - V[i, j])
                best_b = max(best_b, q)
            assert H[i, j] == pytest.approx(best_a + best_b, abs=1e-12)
    assert pol.shape == (2, 5, 6)
    sol = mfg.solve_mfg(prob, grid, m, max_sweeps=20)
    assert abs(sol.densities[-1].sum() - 1.0) < 1e-12


def test_time_step_guards():
    with pytest.raises(ConfigurationError):
        mfg.MfgGrid.uniform(11, 1.0, dt=0.5, horizon=1.0, sigma=0.5)
    grid = mfg.MfgGrid.uniform(11, 1.0, dt=0.1, horizon=0.2, sigma=0.1)
    prob = mfg.MfgProblem(mfg.LinearDrift(10.0), mfg.zero_cost, np.array([0.0, 1.0]))
    with pytest.raises(ConfigurationError):
        mfg.solve_mfg(prob, grid, np.full(11, 1 / 11))


def test_input_validation():
    with pytest.raises(ValidationError):
        mfg.MfgGrid((np.array([0.0, 0.1, 0.3]),), dt=0.1, horizon=1.0)
    with pytest.raises(ShapeError):
        mfg.MfgGrid((np.array([0.0, 1.0]),), dt=0.1, horizon=1.0)
    with pytest.raises(ValidationError):
        mfg.MfgGrid.uniform(5, 1.0, dt=0.3, horizon=1.0)
    with pytest.raises(ValidationError):
        mfg.MfgGrid.uniform(5, 1.0, dt=0.1, horizon=1.0, alpha=0.0)
    with pytest.raises(ValidationError):
        mfg.MfgState(np.zeros(3), np.array([0.5, 0.6, -0.1]))
    with pytest.raises(ValidationError):
        mfg.MfgProblem(mfg.LinearDrift(), mfg.zero_cost, np.array([0.0]), mode="joint-minimax")
    prob, grid, m0 = small_problem()
    with pytest.raises(ShapeError):
        mfg.solve_mfg(prob, grid, m0[:-1] / m0[:-1].sum())


def test_saddle_check():
    P = np.array([[3.0, 1.0, 2.0], [4.0, 5.0, 6.0], [2.0, 0.0, 1.5]])
    # row 2 has the smallest max (2.0), column 0 is its max; 2.0 is the column-0 min
    assert mfg.saddle_check(P) == (2, 0, True)
    assert mfg.saddle_check(np.array([[1.0, -1.0], [-1.0, 1.0]]))[2] is False


@given(st.integers(2, 40), st.floats(0.01, 3.0), st.floats(-2.0, 2.0))
def test_stability_criterion_closed_form(T, rho, slope):
    F = slope * np.arange(T)
    expect = slope**2 * (1 - math.exp(-rho * (T - 1))) / (1 - math.exp(-rho))
    assert mfg.stability_criterion(F, rho) == pytest.approx(expect, rel=1e-10, abs=1e-300)


def test_value_sum_nonzero():
    assert mfg.value_sum_nonzero(np.array([1.0, -2.0]), np.array([-1.0, 0.5])) == 0.0
    with pytest.raises(ShapeError):
        mfg.value_sum_nonzero(np.zeros(2), np.zeros(3))


def test_write_fields_long_format(tmp_path):
    prob, grid, m0 = small_problem()
    sol = mfg.solve_mfg(prob, grid, m0)
    paths = sol.write_fields(tmp_path, grid)
    assert [p.name for p in paths] == ["mfg_value_t0.csv", "mfg_density_tK.csv", "mfg_trace.csv"]
    rows = list(csv.reader(open(paths[1])))
    assert rows[0] == ["x1_bits", "mass"]
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-10)
