import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infogames.errors import DomainError, ShapeError, ValidationError
from infogames.fractional import (
    FracSignal,
    frac_derivative,
    frac_gradient,
    gamma_fn,
    gl_weights,
    kernel_weights,
)


@given(st.floats(0.05, 30.0))
def test_gamma_against_mpmath(x):
    ref = float(mpmath.gamma(x))
    assert abs(gamma_fn(x) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_gamma_domain():
    assert gamma_fn(0.25) == pytest.approx(float(mpmath.gamma(0.25)), rel=1e-12)
    for bad in (0.0, -0.5, float("inf"), 172.0):
        with pytest.raises(DomainError):
            gamma_fn(bad)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_caputo_of_power_law(alpha):
    # D^a t^2 = 2 t^(2-a) / Gamma(3-a); first-order scheme
    for dt, tol in ((1e-2, 2e-2), (1e-3, 2e-3)):
        t = dt * np.arange(int(round(1 / dt)) + 1)
        d = frac_derivative(FracSignal(t**2, dt, alpha))
        exact = 2 * t ** (2 - alpha) / math.gamma(3 - alpha)
        assert np.max(np.abs(d - exact)) < tol


def test_order_one_is_local_difference():
    f = np.array([0.0, 1.0, 4.0, 9.0])
    assert np.array_equal(frac_derivative(FracSignal(f, 0.5, 1.0)), [2.0, 2.0, 6.0, 10.0])


def test_order_zero_is_offset_signal():
    f = np.array([3.0, 1.0, 4.0])
    assert np.allclose(frac_derivative(FracSignal(f, 0.1, 0.0)), f - 3.0)


@given(st.floats(0.1, 0.95), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_and_constant_invariance(alpha, a, b):
    rng = np.random.default_rng(0)
    f, g = rng.random(50), rng.random(50)
    d = lambda x: frac_derivative(FracSignal(x, 0.01, alpha))  # noqa: E731
    assert np.allclose(d(a * f + b * g), a * d(f) + b * d(g), atol=1e-9)
    assert np.allclose(d(f + 7.0), d(f), atol=1e-9)


def test_memory_keeps_past_changes():
    # a step early on still shows up much later for alpha < 1 but not for alpha = 1
    f = np.zeros(200)
    f[5:] = 1.0
    late_frac = frac_derivative(FracSignal(f, 0.01, 0.5))[-1]
    late_local = frac_derivative(FracSignal(f, 0.01, 1.0))[-1]
    assert late_frac > 0.1 and late_local == 0.0


def test_gl_weights_sum_and_sign():
    g = gl_weights(0.6, 5000)
    assert g[0] == 1.0 and np.all(g[1:] < 0)
    assert abs(g.sum()) < 1e-2  # partial sums tend to zero
    assert np.allclose(gl_weights(1.0, 4), [1.0, -1.0, 0.0, 0.0])


def _kernel_quad(alpha, i, dt):
    # s = v^20 removes the endpoint singularity for alpha <= 0.95
    lo, hi = (i * dt) ** 0.05, ((i + 1) * dt) ** 0.05
    val = mpmath.quad(lambda v: 20 * v ** (19 - 20 * alpha), [lo, hi])
    return float(val) / math.gamma(1 - alpha)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
def test_kernel_weights_against_quadrature(alpha):
    w = kernel_weights(alpha, 6, 0.1)
    ref = [_kernel_quad(alpha, i, 0.1) for i in range(6)]
    assert np.allclose(w, ref, rtol=1e-10)


def test_frac_gradient_against_direct_sum():
    x = np.linspace(0, 1, 11)
    hist = np.array([x**2, np.sin(x), x])
    field = np.cos(x)
    alpha, dt = 0.4, 0.2
    seq = np.vstack([hist, field])
    grads = [np.gradient(s, x[1] - x[0]) for s in seq]
    ref = sum(_kernel_quad(alpha, i, dt) * grads[-1 - i] for i in range(3))
    assert np.allclose(frac_gradient(field, alpha, hist, dt, x[1] - x[0]), ref, rtol=1e-9)
    assert np.allclose(frac_gradient(field, 1.0, hist, dt, x[1] - x[0]), grads[-1])


def test_signal_validation_and_csv(tmp_path):
    with pytest.raises(ShapeError):
        FracSignal(np.array([1.0]), 0.1, 0.5)
    with pytest.raises(ValidationError):
        FracSignal(np.zeros(3), 0.0, 0.5)
    with pytest.raises(ValidationError):
        FracSignal(np.zeros(3), 0.1, 1.5)
    s = FracSignal(np.array([0.0, 0.5, 2.0]), 0.25, 0.5)
    s.to_csv(tmp_path / "s.csv")
    back = FracSignal.from_csv(tmp_path / "s.csv", 0.5)
    assert np.array_equal(back.samples, s.samples) and back.dt == s.dt
    (tmp_path / "bad.csv").write_text("t,f\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(ValidationError):
        FracSignal.from_csv(tmp_path / "bad.csv", 0.5)
