import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infogames import kuramoto as ku
from infogames.errors import ValidationError


def reference_difference(dw, D, x0, t_end, dt=1e-3):
    """RK4 on the scalar equation for the phase difference of two oscillators."""
    f = lambda x: dw - D * math.sin(x)  # noqa: E731
    x = x0
    for _ in range(int(round(t_end / dt))):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@pytest.mark.parametrize("ratio", [0.2, 0.5, 0.9])
def test_two_oscillators_lock(ratio):
    D = 1.5
    dw = ratio * D
    state = ku.OscillatorState(np.array([0.0, 1.0]), np.array([0.0, dw]), D)
    traj = ku.integrate(state, 0.01, 5000)
    diff = traj[:, 1] - traj[:, 0]
    assert diff[-1] == pytest.approx(reference_difference(dw, D, 1.0, 50.0), abs=1e-6)
    assert diff[-1] == pytest.approx(ku.lock_angle(dw, D), abs=1e-3)


def test_order_parameter_extremes():
    assert ku.order_parameter(np.zeros(5))[0] == pytest.approx(1.0)
    r, _ = ku.order_parameter(np.linspace(0, 2 * np.pi, 8, endpoint=False))
    assert r < 1e-12
    r, psi = ku.order_parameter(np.array([0.1, 0.3]))
    assert psi == pytest.approx(0.2)
    assert r == pytest.approx(math.cos(0.1))


@given(st.integers(0, 1000), st.floats(0.2, 3.0))
def test_coherence_never_drops_for_identical_frequencies(seed, D):
    # identical frequencies make the flow a gradient ascent of r^2
    rng = np.random.default_rng(seed)
    state = ku.OscillatorState(rng.uniform(0, 2 * np.pi, 12), np.full(12, 0.3), D)
    traj = ku.integrate(state, 0.02, 300)
    r = np.array([ku.order_parameter(p)[0] for p in traj])
    assert np.all(np.diff(r) >= -1e-10)


def test_coupling_term_sums_to_zero():
    rng = np.random.default_rng(0)
    phi = rng.uniform(0, 6, 9)
    assert abs(ku.coupling_term(phi, 2.0).sum()) < 1e-12
    mask = np.ones((9, 9))
    assert np.allclose(ku.coupling_term(phi, 2.0, mask), ku.coupling_term(phi, 2.0))


def test_noise_is_seeded_and_step_wraps():
    state = ku.OscillatorState(np.array([0.0, 3.0, 6.0]), np.zeros(3), 1.0, noise=0.5)
    a = ku.integrate(state, 0.01, 50, rng=4)
    b = ku.integrate(state, 0.01, 50, rng=4)
    assert np.array_equal(a, b)
    moved = ku.step(ku.OscillatorState(np.array([6.2]), np.array([1.0]), 0.0), 0.5)
    assert 0 <= moved.phases[0] < 2 * np.pi
    assert moved.unwrapped[0] == pytest.approx(6.7)


def test_validation():
    with pytest.raises(ValidationError):
        ku.lock_angle(2.0, 1.0)
    with pytest.raises(ValidationError):
        ku.OscillatorState(np.array([]), np.array([]))
    with pytest.raises(ValidationError):
        ku.OscillatorState(np.zeros(2), np.zeros(2), adjacency=np.ones((3, 3)))
    with pytest.raises(ValidationError):
        ku.integrate(ku.OscillatorState(np.zeros(2), np.zeros(2)), 0.0, 3)


def test_trajectory_csv(tmp_path):
    traj = ku.integrate(ku.OscillatorState(np.array([0.0, 1.0]), np.array([0.0, 0.1])), 0.1, 3)
    ku.write_trajectory(tmp_path / "k.csv", traj, 0.1)
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert len(lines) == 5
