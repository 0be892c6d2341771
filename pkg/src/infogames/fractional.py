"""Fractional-order time operators on uniformly sampled signals.

The derivative is the Caputo form discretised with Grünwald–Letnikov
weights; the gradient convolves spatial gradients over a stored history with
the power-law kernel ``(t - s)^(-alpha) / Gamma(1 - alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError, ValidationError

# Lanczos coefficients for g = 7, n = 9 (Godfrey)
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Euler Gamma function for ``x > 0`` (Lanczos approximation).

    Raises
    ------
    DomainError
        For ``x <= 0``; poles and the negative axis are not supported.
    """
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"gamma_fn needs a positive finite argument, got {x}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    if x > 171.0:
        raise DomainError("gamma_fn overflows beyond x = 171")
    z = x - 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


@dataclass(frozen=True)
class FracSignal:
    """Uniformly sampled signal with a fractional order attached."""

    samples: np.ndarray
    dt: float
    alpha: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ShapeError("a FracSignal needs at least two samples")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    @classmethod
    def from_csv(cls, path, alpha: float) -> "FracSignal":
        """Load a two-column ``t,f`` file (header optional); the time axis must be uniform."""
        with open(Path(path)) as fh:
            first = fh.readline().split(",")[0]
        try:
            float(first)
            skip = 0
        except ValueError:
            skip = 1
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2, comments="#", skiprows=skip)
        if data.shape[1] != 2:
            raise ShapeError("expected two columns (t, f)")
        steps = np.diff(data[:, 0])
        if steps.size == 0 or np.ptp(steps) > 1e-9 * max(1.0, abs(steps[0])):
            raise ValidationError("non-uniform sampling is not supported")
        return cls(data[:, 1], float(steps[0]), alpha)

    def to_csv(self, path) -> None:
        np.savetxt(
            Path(path),
            np.column_stack([self.times, self.samples]),
            delimiter=",",
            header="t,f",
            comments="",
            fmt="%.17g",
        )


def gl_weights(alpha: float, n: int) -> np.ndarray:
    """Grünwald–Letnikov weights ``(-1)^j binom(alpha, j)`` for ``j < n``.

    Uses the product recursion so no Gamma values are formed.
    """
    g = np.empty(n)
    if n == 0:
        return g
    g[0] = 1.0
    for j in range(1, n):
        g[j] = g[j - 1] * (1.0 - (alpha + 1.0) / j)
    return g


def frac_derivative(f: FracSignal) -> np.ndarray:
    """Caputo-type derivative of order ``alpha`` at every sample time.

    ``out[k] = dt^-alpha * sum_j g_j (f[k-j] - f[0])``. For ``alpha = 1`` the
    operator is local: first differences, with the forward difference used
    at the first sample where no past exists. For ``alpha = 0`` the result is
    ``f - f[0]``.
    """
    x = f.samples - f.samples[0]
    if f.alpha == 1.0:
        d = np.empty_like(x)
        d[1:] = np.diff(f.samples) / f.dt
        d[0] = (f.samples[1] - f.samples[0]) / f.dt
        return d
    g = gl_weights(f.alpha, x.size)
    return kernels.causal_convolve(g, x) / f.dt**f.alpha


def kernel_weights(alpha: float, n_intervals: int, dt: float) -> np.ndarray:
    """Product-integration weights of the power-law kernel.

    Entry ``i`` is the integral of ``(t - s)^-alpha / Gamma(1 - alpha)`` over
    the ``i``-th most recent interval. At ``alpha = 1`` all weight sits on the
    latest interval, which recovers the plain gradient.
    """
    if n_intervals == 0:
        return np.zeros(0)
    if alpha >= 1.0:
        w = np.zeros(n_intervals)
        w[0] = 1.0
        return w
    j = np.arange(n_intervals, dtype=float)
    e = 1.0 - alpha
    return dt**e * ((j + 1.0) ** e - j**e) / gamma_fn(2.0 - alpha)


def frac_gradient(
    field: np.ndarray,
    alpha: float,
    history: np.ndarray | None,
    dt: float,
    dx: float = 1.0,
) -> np.ndarray:
    """History-weighted spatial gradient with power-law memory.

    Parameters
    ----------
    field : ndarray, shape (n,)
        Current field on a uniform grid.
    alpha : float
        Order in ``[0, 1]``.
    history : ndarray, shape (h, n) or None
        Past fields, oldest first. The current field closes the last interval.
    dt, dx : float
        Time step between stored fields and grid spacing.

    Returns
    -------
    ndarray, shape (n,)
        ``sum_i w_i * grad(field at the right end of interval i)``.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim != 1 or field.size < 2:
        raise ShapeError("field must be 1-d with at least two points")
    hist = np.zeros((0, field.size)) if history is None else np.asarray(history, dtype=float)
    if hist.ndim != 2 or (hist.size and hist.shape[1] != field.size):
        raise ShapeError("history rows must match the field length")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    seq = np.vstack([hist, field[None, :]])
    grads = np.gradient(seq, dx, axis=1)
    n_int = seq.shape[0] - 1
    if n_int == 0:
        return grads[-1] if alpha >= 1.0 else np.zeros_like(field)
    w = kernel_weights(alpha, n_int, dt)
    # newest interval first: its right end is the current field
    return w @ grads[:0:-1]
