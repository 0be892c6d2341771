import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infogames import funnel as fn
from infogames.errors import InfeasibleError, ValidationError
from infogames.prob import Channel, JointPmf, entropy, information_pair, mutual_information


def random_joint(seed, n_s=2, n_x=3):
    rng = np.random.default_rng(seed)
    return JointPmf(rng.dirichlet(np.ones(n_s * n_x)).reshape(n_s, n_x))


def test_rate_corners_are_exact():
    j = random_joint(1)
    h_x = entropy(j.marginal_b())
    zero = fn.solve_funnel(fn.FunnelProblem(j, 3, "rate", 0.0))
    full = fn.solve_funnel(fn.FunnelProblem(j, 3, "rate", h_x))
    assert zero.leakage == pytest.approx(0.0, abs=1e-12)
    assert full.leakage == pytest.approx(mutual_information(j), abs=1e-12)


def test_infeasible_rates_raise():
    j = random_joint(2)
    with pytest.raises(InfeasibleError):
        fn.FunnelProblem(j, 3, "rate", entropy(j.marginal_b()) + 0.01)
    with pytest.raises(InfeasibleError):
        fn.FunnelProblem(j, 2, "rate", 1.01)
    with pytest.raises(ValidationError):
        fn.FunnelProblem(j, 3, "gap", mutual_information(j) + 0.01)
    with pytest.raises(ValidationError):
        fn.solve_funnel(fn.FunnelProblem(j, 3, "rate", 0.5), tol=0.0)


@pytest.mark.parametrize("seed", range(8))
def test_gap_mode_reaches_analytic_floor(seed):
    # leakage can slide continuously from 0 to I(S;X), so the floor is attained
    j = random_joint(seed)
    i_sx = mutual_information(j)
    eps = 0.4 * i_sx
    sol = fn.solve_funnel(fn.FunnelProblem(j, 3, "gap", eps), seed)
    assert sol.leakage >= i_sx - eps - 1e-9
    assert sol.leakage == pytest.approx(i_sx - eps, abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.sampled_from([2, 3, 4]))
def test_solution_is_feasible_and_not_worse_than_identity(seed, frac, y_size):
    j = random_joint(seed)
    R = frac * min(entropy(j.marginal_b()), math.log2(y_size))
    prob = fn.FunnelProblem(j, y_size, "rate", R)
    sol = fn.solve_funnel(prob, seed)
    leak, util = information_pair(j, sol.channel)
    assert util >= R - 1e-9
    assert leak == pytest.approx(sol.leakage, abs=1e-12)
    assert sol.leakage <= mutual_information(j) + 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_descent_trace_is_monotone(seed):
    j = random_joint(seed, 2, 2)
    R = 0.5 * entropy(j.marginal_b())
    sol = fn.solve_funnel(fn.FunnelProblem(j, 2, "rate", R), seed)
    leak = np.array([t[0] for t in sol.trace])
    util = np.array([t[1] for t in sol.trace])
    assert np.all(np.diff(leak) <= 1e-12)
    assert np.all(util >= R - 1e-9)
    assert sol.trace[-1][0] == pytest.approx(sol.leakage)


def test_never_worse_than_greedy_on_many_instances():
    worse = 0
    for seed in range(100):
        j = random_joint(seed, 2, 2)
        R = np.random.default_rng(seed).uniform(0.1, 0.9) * entropy(j.marginal_b())
        prob = fn.FunnelProblem(j, 2, "rate", R)
        worse += fn.solve_funnel(prob, seed).leakage > fn.greedy_baseline(prob, init=seed).leakage + 1e-4
    assert worse == 0


def test_header_rows_skip_uninformative_symbols():
    # x = 2 has the prior as posterior
    j = JointPmf(np.array([[0.3, 0.05, 0.15], [0.05, 0.3, 0.15]]))
    assert fn.header_rows(j).tolist() == [0, 1]
    indep = JointPmf(np.outer([0.4, 0.6], [0.5, 0.5]))
    assert fn.header_rows(indep).size == 0
    sol = fn.solve_funnel(fn.FunnelProblem(indep, 2, "rate", 0.5))
    assert sol.leakage == pytest.approx(0.0, abs=1e-12) and sol.iterations == 0


def test_explicit_initial_channel():
    j = random_joint(3, 2, 2)
    prob = fn.FunnelProblem(j, 2, "rate", 0.3 * entropy(j.marginal_b()))
    sol = fn.solve_funnel(prob, Channel(np.array([[0.9, 0.1], [0.2, 0.8]])))
    assert sol.utility >= prob.bound - 1e-9
    with pytest.raises(ValidationError):
        fn.solve_funnel(prob, Channel.identity(3))


def test_tradeoff_sweep_envelope_and_nan_for_infeasible():
    j = random_joint(4, 2, 2)
    h_x = entropy(j.marginal_b())
    curve = fn.tradeoff_sweep(j, 2, [0.0, 0.3 * h_x, 0.6 * h_x, h_x, h_x + 0.5])
    leak = [c[1] for c in curve]
    assert all(b >= a - 1e-12 for a, b in zip(leak[:-2], leak[1:-1]))
    assert math.isnan(curve[-1][1])
    with pytest.raises(ValidationError):
        fn.tradeoff_sweep(j, 2, [0.5, 0.1])


def test_trace_csv(tmp_path):
    j = random_joint(5, 2, 2)
    sol = fn.solve_funnel(fn.FunnelProblem(j, 2, "rate", 0.4 * entropy(j.marginal_b())))
    sol.write_trace(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iter", "leakage_bits", "utility_bits"]
    assert len(rows) == len(sol.trace) + 1
