"""Kuramoto phase oscillators with all-to-all (or masked) sine coupling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ValidationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class OscillatorState:
    """Wrapped phases plus the unwrapped copy used for drift diagnostics."""

    phases: np.ndarray
    omegas: np.ndarray
    coupling: float = 1.0
    adjacency: np.ndarray | None = None
    noise: float = 0.0
    unwrapped: np.ndarray | None = None

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).ravel()
        om = np.broadcast_to(np.asarray(self.omegas, dtype=float), ph.shape).copy()
        if ph.size == 0 or not np.all(np.isfinite(ph)) or not np.all(np.isfinite(om)):
            raise ValidationError("phases and frequencies must be finite and non-empty")
        if self.adjacency is not None:
            a = np.asarray(self.adjacency, dtype=float)
            if a.shape != (ph.size, ph.size):
                raise ValidationError("adjacency must be N x N")
            object.__setattr__(self, "adjacency", a)
        unw = ph.copy() if self.unwrapped is None else np.asarray(self.unwrapped, dtype=float)
        object.__setattr__(self, "unwrapped", unw)
        object.__setattr__(self, "phases", np.mod(ph, TWO_PI))
        object.__setattr__(self, "omegas", om)

    @property
    def n(self) -> int:
        return self.phases.size


def coupling_term(phases: np.ndarray, coupling: float, adjacency=None) -> np.ndarray:
    """``(D / N) * sum_j A_ij sin(phi_j - phi_i)`` for every oscillator."""
    phi = np.asarray(phases, dtype=float)
    s = np.sin(phi[None, :] - phi[:, None])
    if adjacency is not None:
        s = s * adjacency
    return coupling / phi.size * s.sum(axis=1)


def integrate(state: OscillatorState, dt: float, n_steps: int, rng=None) -> np.ndarray:
    """Unwrapped phase trajectory, shape ``(n_steps + 1, N)``.

    Deterministic dynamics use RK4; with ``noise > 0`` Gaussian increments of
    scale ``noise * sqrt(dt)`` are added after each RK4 step.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if state.noise <= 0:
        return kernels.kuramoto_rk4(state.unwrapped, state.omegas, state.coupling, dt, n_steps, state.adjacency)
    rng = np.random.default_rng(rng)
    out = np.empty((n_steps + 1, state.n))
    out[0] = state.unwrapped
    phi = state.unwrapped
    for k in range(n_steps):
        phi = kernels.kuramoto_rk4(phi, state.omegas, state.coupling, dt, 1, state.adjacency)[-1]
        phi = phi + state.noise * np.sqrt(dt) * rng.standard_normal(state.n)
        out[k + 1] = phi
    return out


def step(state: OscillatorState, dt: float, rng=None) -> OscillatorState:
    """Advance one RK4 step and re-wrap the phases."""
    phi = integrate(state, dt, 1, rng)[-1]
    return replace(state, phases=phi, unwrapped=phi)


def order_parameter(phases) -> tuple[float, float]:
    """Coherence ``r`` and mean phase ``psi`` with ``r e^{i psi} = mean(e^{i phi})``."""
    phi = np.asarray(phases.phases if isinstance(phases, OscillatorState) else phases, dtype=float)
    if phi.size == 0:
        raise ValidationError("no oscillators")
    z = np.exp(1j * phi).mean()
    return float(min(1.0, abs(z))), float(np.mod(np.angle(z), TWO_PI))


def lock_angle(delta_omega: float, coupling: float) -> float:
    """Locked phase difference of two oscillators, ``arcsin(dw / D)``."""
    ratio = delta_omega / coupling
    if abs(ratio) > 1:
        raise ValidationError("no locked state: |dw| exceeds the coupling")
    return float(np.arcsin(ratio))


def write_trajectory(path, traj: np.ndarray, dt: float) -> None:
    """CSV with time, wrapped phases and the coherence ``r`` per row."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"phi_{i + 1}_rad" for i in range(traj.shape[1])] + ["r"])
        for k, phi in enumerate(traj):
            r, _ = order_parameter(phi)
            w.writerow([f"{k * dt:.10g}"] + [f"{p:.12g}" for p in np.mod(phi, TWO_PI)] + [f"{r:.12g}"])
