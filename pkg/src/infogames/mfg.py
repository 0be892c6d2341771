"""Mean-field game solver: backward HJB, forward Fokker–Planck, fixed point.

Both equations share one monotone upwind discretisation. A control ``u`` at
node ``i`` induces jump rates to the neighbours,

    up = b+ / dx + D / dx**2,   down = b- / dx + D / dx**2,   D = sigma**2 / 2,

with jumps through the outer walls suppressed (reflection). The HJB update
is the dynamic-programming recursion of that jump process and the density
update is its exact adjoint written in flux form, so mass is conserved to
rounding. For ``alpha < 1`` both time updates carry Caputo memory through
Grünwald–Letnikov weights.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, ShapeError, ValidationError
from .fractional import gl_weights


class Mode(str, Enum):
    ALICE_MIN = "alice-min"
    BOB_MAX = "bob-max"
    JOINT_MINIMAX = "joint-minimax"


# --------------------------------------------------------------------------
# plug-in drift and cost


@dataclass(frozen=True)
class LinearDrift:
    """``sign * gain * (u - p0)``; sign is -1 for the leakage-reducing side."""

    gain: float = 1.0
    p0: float = 0.5
    sign: float = -1.0

    def __call__(self, x, u):
        return self.sign * self.gain * (np.asarray(u, dtype=float) - self.p0) + 0.0 * np.asarray(x)


@dataclass(frozen=True)
class TanhDrift:
    """Saturating drift ``sign * gain * tanh((u - p0) / width)``."""

    gain: float = 1.0
    p0: float = 0.5
    sign: float = -1.0
    width: float = 0.25

    def __call__(self, x, u):
        v = np.tanh((np.asarray(u, dtype=float) - self.p0) / self.width)
        return self.sign * self.gain * v + 0.0 * np.asarray(x)


@dataclass(frozen=True)
class QuadraticCost:
    """Running cost ``q (x - target)^2 + r/2 (u - p0)^2 + coupling (x - mean)^2``.

    With ``reward=True`` the negated value is returned, for the maximising side.
    """

    q: float = 1.0
    target: float = 0.0
    r: float = 1.0
    p0: float = 0.5
    coupling: float = 0.0
    reward: bool = False

    def __call__(self, x, u, mean):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        c = self.q * (x - self.target) ** 2 + 0.5 * self.r * (u - self.p0) ** 2
        c = c + self.coupling * (x - mean) ** 2
        return -c if self.reward else c


def zero_cost(x, u, mean):
    return 0.0 * np.asarray(x, dtype=float) * np.asarray(u, dtype=float)


# --------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class MfgGrid:
    """Uniform state axes plus time stepping.

    Parameters
    ----------
    axes : sequence of ndarray
        One or two uniformly spaced axes with at least three nodes each.
    dt, horizon : float
        Time step and horizon; ``horizon / dt`` must be an integer.
    sigma : float
        Noise scale; diffusion coefficient is ``sigma**2 / 2``.
    alpha : float
        Fractional order of the time derivative, in ``(0, 1]``.
    """

    axes: tuple
    dt: float
    horizon: float
    sigma: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) not in (1, 2):
            raise ShapeError("one or two state axes are supported")
        for a in axes:
            if a.ndim != 1 or a.size < 3:
                raise ShapeError("each axis needs at least three nodes")
            d = np.diff(a)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d[0]:
                raise ValidationError("axes must be uniform and increasing")
        object.__setattr__(self, "axes", axes)
        if not self.dt > 0 or not self.horizon > 0:
            raise ValidationError("dt and horizon must be positive")
        if abs(self.horizon / self.dt - round(self.horizon / self.dt)) > 1e-9:
            raise ValidationError("horizon must be a whole number of steps")
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")
        if self.sigma > 0:
            limit = 0.5 * min(self.dx) ** 2 / self.sigma**2
            if self.dt > limit + 1e-15:
                raise ConfigurationError(f"dt={self.dt} breaks the diffusion bound {limit:.3g}")

    @classmethod
    def uniform(cls, n: int | Sequence[int], upper: float | Sequence[float], **kw) -> "MfgGrid":
        ns = [n] if np.isscalar(n) else list(n)
        ups = [upper] * len(ns) if np.isscalar(upper) else list(upper)
        return cls(tuple(np.linspace(0.0, u, k) for k, u in zip(ns, ups)), **kw)

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def diffusion(self) -> float:
        return 0.5 * self.sigma**2

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))


@dataclass
class MfgProblem:
    """Dynamics and objective of one side (or both sides in joint mode).

    In joint mode ``drift``/``cost``/``controls`` act on the first axis and
    the minimising player, the ``*_2`` fields on the second axis and the
    maximising player.
    """

    drift: Callable
    cost: Callable
    controls: np.ndarray
    mode: Mode = Mode.ALICE_MIN
    terminal: Callable | None = None
    drift_2: Callable | None = None
    cost_2: Callable | None = None
    controls_2: np.ndarray | None = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim != 1 or self.controls.size == 0:
            raise ValidationError("control set must be a non-empty 1-d array")
        if self.mode is Mode.JOINT_MINIMAX:
            if self.drift_2 is None or self.cost_2 is None or self.controls_2 is None:
                raise ValidationError("joint mode needs drift_2, cost_2 and controls_2")
            self.controls_2 = np.asarray(self.controls_2, dtype=float)


@dataclass
class MfgState:
    """Value, density and feedback control at one time level."""

    value: np.ndarray
    density: np.ndarray
    control: np.ndarray | None = None

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.value.shape != self.density.shape:
            raise ShapeError("value and density shapes differ")
        if np.any(self.density < -1e-15):
            raise ValidationError("density has a negative entry")
        if abs(self.density.sum() - 1.0) > 1e-9:
            raise ValidationError("density mass is not 1")


@dataclass
class MfgSolution:
    """Fixed-point output: full time histories plus a convergence report."""

    values: np.ndarray  # (K+1, *grid)
    densities: np.ndarray  # (K+1, *grid)
    controls: np.ndarray  # (K, *grid) or (K, 2, *grid)
    sweeps: int
    residuals: list[float]
    converged: bool

    @property
    def state(self) -> MfgState:
        return MfgState(self.values[0], self.densities[-1], self.controls[0])

    def mean_trajectory(self, grid: MfgGrid, axis: int = 0) -> np.ndarray:
        x = grid.mesh[axis]
        return np.array([float(np.sum(m * x)) for m in self.densities])

    def write_fields(self, out_dir, grid: MfgGrid) -> list[Path]:
        """Export value/density at time 0 and final time plus the trace."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        coords = [c.ravel() for c in grid.mesh]
        names = [f"x{i + 1}_bits" for i in range(len(coords))]
        for name, col, arr in (
            ("value_t0", "value", self.values[0]),
            ("density_tK", "mass", self.densities[-1]),
        ):
            p = out_dir / f"mfg_{name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(names + [col])
                for row in zip(*coords, arr.ravel()):
                    w.writerow([f"{v:.12g}" for v in row])
            paths.append(p)
        p = out_dir / "mfg_trace.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "residual_l1"])
            for i, r in enumerate(self.residuals, start=1):
                w.writerow([i, f"{r:.12g}"])
        paths.append(p)
        return paths


# --------------------------------------------------------------------------
# jump rates


def _rates_1d(b: np.ndarray, dx: float, diff: float) -> tuple[np.ndarray, np.ndarray]:
    """Upward/downward jump rates along the last axis, walls closed."""
    up = np.maximum(b, 0.0) / dx + diff / dx**2
    dn = np.maximum(-b, 0.0) / dx + diff / dx**2
    up[..., -1] = 0.0
    dn[..., 0] = 0.0
    return up, dn


def _check_monotone(rate_out: np.ndarray, grid: MfgGrid) -> None:
    lim = grid.alpha  # coefficient of the latest level in the memory sum
    worst = float(rate_out.max()) * grid.dt**grid.alpha if rate_out.size else 0.0
    if worst > lim + 1e-12:
        raise ConfigurationError(
            f"time step too large for a monotone scheme (dt^alpha * rate = {worst:.3g} > {lim})"
        )


def _mean(m: np.ndarray, grid: MfgGrid, axis: int) -> float:
    return float(np.sum(m * grid.mesh[axis]))


def _side_q(V, density, grid, drift, cost, controls, axis):
    """Hamiltonian candidates for every control: shape (n_controls, *grid)."""
    x = grid.mesh[axis][None]
    u = controls.reshape((-1,) + (1,) * V.ndim)
    mean = _mean(density, grid, axis)
    shape = (controls.size,) + V.shape
    b = np.broadcast_to(drift(x, u), shape)
    up, dn = _rates_1d(np.moveaxis(b, axis + 1, -1), grid.dx[axis], grid.diffusion)
    Vm = np.moveaxis(V, axis, -1)
    fwd = np.zeros_like(Vm)
    bwd = np.zeros_like(Vm)
    fwd[..., :-1] = Vm[..., 1:] - Vm[..., :-1]
    bwd[..., 1:] = Vm[..., :-1] - Vm[..., 1:]
    gen = np.moveaxis(up * fwd + dn * bwd, -1, axis + 1)
    return np.broadcast_to(cost(x, u, mean), shape) + gen


def _select(qs: np.ndarray, controls: np.ndarray, maximise: bool) -> np.ndarray:
    """Index of the optimal control per node; ties go to the control nearest
    the middle of the control set (smallest drift for symmetric drifts)."""
    order = np.argsort(np.abs(controls - np.median(controls)), kind="stable")
    q = qs[order]
    idx = np.argmax(q, axis=0) if maximise else np.argmin(q, axis=0)
    return order[idx]


def hamiltonian(V, density, prob: MfgProblem, grid: MfgGrid):
    """Optimal Hamiltonian and the feedback control indices.

    Returns
    -------
    H : ndarray
    policy : ndarray of int, shape (sides, *grid)
    """
    if prob.mode is Mode.JOINT_MINIMAX:
        if len(grid.axes) != 2:
            raise ShapeError("joint mode needs a 2-d grid")
        qa = _side_q(V, density, grid, prob.drift, prob.cost, prob.controls, 0)
        qb = _side_q(V, density, grid, prob.drift_2, prob.cost_2, prob.controls_2, 1)
        ia = _select(qa, prob.controls, maximise=False)
        ib = _select(qb, prob.controls_2, maximise=True)
        H = np.take_along_axis(qa, ia[None], 0)[0] + np.take_along_axis(qb, ib[None], 0)[0]
        return H, np.stack([ia, ib])
    if len(grid.axes) != 1:
        raise ShapeError("single-player modes use a 1-d grid")
    qs = _side_q(V, density, grid, prob.drift, prob.cost, prob.controls, 0)
    idx = _select(qs, prob.controls, maximise=prob.mode is Mode.BOB_MAX)
    return np.take_along_axis(qs, idx[None], 0)[0], idx[None]


def _policy_rates(policy, prob: MfgProblem, grid: MfgGrid):
    """Per-axis jump rates ``[(up, dn), ...]`` of a feedback policy."""
    X = grid.mesh
    sides = [(prob.drift, prob.controls)]
    if prob.mode is Mode.JOINT_MINIMAX:
        sides.append((prob.drift_2, prob.controls_2))
    out = []
    for axis, (drift, controls) in enumerate(sides):
        u = controls[policy[axis]]
        b = np.broadcast_to(drift(X[axis], u), grid.shape)
        up, dn = _rates_1d(np.moveaxis(b, axis, -1), grid.dx[axis], grid.diffusion)
        out.append((np.moveaxis(up, -1, axis), np.moveaxis(dn, -1, axis)))
    return out


def _memory(g: np.ndarray, history, anchor: np.ndarray) -> np.ndarray:
    """Caputo memory ``(1 + sum g_j) anchor - sum_j g_j h_j`` for j >= 1.

    ``history[0]`` is the most recent level. With ``alpha = 1`` this returns
    the most recent level itself.
    """
    hist = np.asarray(history)
    gj = g[1 : hist.shape[0] + 1]
    return (1.0 + gj.sum()) * anchor - np.tensordot(gj, hist, axes=1)


def hjb_backward_step(
    state: MfgState,
    prob: MfgProblem,
    grid: MfgGrid,
    history: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """One backward step of the value function.

    ``state.value`` holds the later level ``V[k+1]`` and ``state.density`` the
    population at time ``k``. For ``alpha < 1`` pass ``history`` as the later
    levels ``[V[k+1], V[k+2], ..., V[K]]``.
    """
    V = state.value
    H, policy = hamiltonian(V, state.density, prob, grid)
    rates = _policy_rates(policy, prob, grid)
    _check_monotone(sum(u + d for u, d in rates), grid)
    step = grid.dt**grid.alpha * H
    if grid.alpha == 1.0 or not history:
        return V + step
    g = gl_weights(grid.alpha, len(history) + 1)
    return _memory(g, history, history[-1]) + step


def _flux_update(m, rates, scale):
    """``m + scale * L m`` with ``L`` the adjoint generator (flux form)."""
    out = m.copy()
    for axis, (up, dn) in enumerate(rates):
        mm = np.moveaxis(m, axis, -1)
        u = np.moveaxis(up, axis, -1) * scale
        d = np.moveaxis(dn, axis, -1) * scale
        if mm.ndim == 1:
            moved = kernels.fpk_steps(mm, u, d, 1) - mm
        else:
            face = mm[..., :-1] * u[..., :-1] - mm[..., 1:] * d[..., 1:]
            moved = np.zeros_like(mm)
            moved[..., :-1] -= face
            moved[..., 1:] += face
        out = out + np.moveaxis(moved, -1, axis)
    return out


def fpk_forward_step(
    state: MfgState,
    prob: MfgProblem,
    grid: MfgGrid,
    policy: np.ndarray | None = None,
    history: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """One forward step of the density under a feedback policy.

    If ``policy`` is omitted it is recomputed from ``state.value`` (the value
    at the next level). ``history`` lists past densities, newest first, and
    is only used for ``alpha < 1``.
    """
    m = state.density
    if policy is None:
        _, policy = hamiltonian(state.value, m, prob, grid)
    rates = _policy_rates(policy, prob, grid)
    _check_monotone(sum(u + d for u, d in rates), grid)
    scale = grid.dt**grid.alpha
    moved = _flux_update(m, rates, scale) - m
    if grid.alpha == 1.0 or not history:
        new = m + moved
    else:
        g = gl_weights(grid.alpha, len(history) + 1)
        new = _memory(g, history, history[-1]) + moved
    return new


def _memory_weights(grid: MfgGrid) -> np.ndarray:
    return gl_weights(grid.alpha, grid.n_steps + 1)


def _tables_1d(path, prob, grid):
    """Cost table (K, n_u, n) against the density path and drift table (n_u, n)."""
    x = grid.axes[0]
    u = prob.controls
    means = path[:-1] @ x
    cost = prob.cost(x[None, None, :], u[None, :, None], means[:, None, None])
    cost = np.ascontiguousarray(np.broadcast_to(cost, (grid.n_steps, u.size, x.size)), dtype=float)
    drift = np.ascontiguousarray(np.broadcast_to(prob.drift(x[None, :], u[:, None]), (u.size, x.size)), dtype=float)
    return cost, drift


def _check_table(drift, grid, axis=0):
    up, dn = _rates_1d(np.asarray(drift, dtype=float), grid.dx[axis], grid.diffusion)
    _check_monotone(up + dn, grid)


def _backward_pass(densities, prob, grid, terminal):
    K = grid.n_steps
    g = _memory_weights(grid)
    scale = grid.dt**grid.alpha
    if prob.mode is not Mode.JOINT_MINIMAX:
        cost, drift = _tables_1d(densities, prob, grid)
        _check_table(drift, grid)
        order = np.argsort(np.abs(prob.controls - np.median(prob.controls)), kind="stable")
        values, pol = kernels.hjb_pass_1d(
            cost, drift, np.asarray(terminal, dtype=float), grid.dx[0], grid.diffusion,
            scale, g, order, prob.mode is Mode.BOB_MAX,
        )
        return values, pol[:, None]
    values = np.empty((K + 1,) + grid.shape)
    policies = np.empty((K, 2) + grid.shape, dtype=int)
    values[K] = terminal
    for k in range(K - 1, -1, -1):
        H, pol = hamiltonian(values[k + 1], densities[k], prob, grid)
        if grid.alpha == 1.0:
            values[k] = values[k + 1] + scale * H
        else:
            values[k] = _memory(g, values[k + 1 :], values[K]) + scale * H
        policies[k] = pol
    return values, policies


def _forward_pass(m0, policies, prob, grid):
    K = grid.n_steps
    g = _memory_weights(grid)
    scale = grid.dt**grid.alpha
    if prob.mode is not Mode.JOINT_MINIMAX:
        x = grid.axes[0]
        drift = np.broadcast_to(prob.drift(x[None, :], prob.controls[:, None]), (prob.controls.size, x.size))
        return kernels.fpk_pass_1d(m0, drift, policies[:, 0], grid.dx[0], grid.diffusion, scale, g)
    dens = np.empty((K + 1,) + grid.shape)
    dens[0] = m0
    for k in range(K):
        rates = _policy_rates(policies[k], prob, grid)
        _check_monotone(sum(u + d for u, d in rates), grid)
        moved = _flux_update(dens[k], rates, scale) - dens[k]
        if grid.alpha == 1.0:
            dens[k + 1] = dens[k] + moved
        else:
            dens[k + 1] = _memory(g, dens[k::-1], dens[0]) + moved
    return dens


def solve_mfg(
    prob: MfgProblem,
    grid: MfgGrid,
    m0: np.ndarray,
    tol: float = 1e-6,
    max_sweeps: int = 200,
    damping: float = 1.0,
    terminal: np.ndarray | None = None,
) -> MfgSolution:
    """Fixed point of the coupled HJB/FPK system by damped Picard sweeps.

    Each sweep solves the value function backward against the current
    density path, then pushes ``m0`` forward under the resulting feedback.
    Iteration stops when the largest L1 change of the density path falls
    below ``tol``. The default is plain Picard iteration; a ``damping``
    below one relaxes the update for strongly coupled instances.

    Parameters
    ----------
    m0 : ndarray
        Initial probability masses on the grid nodes.
    damping : float
        Weight of the new density path in the relaxation step.
    terminal : ndarray, optional
        Terminal value; zero by default, or ``prob.terminal(mesh)``.
    """
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != grid.shape:
        raise ShapeError("initial density does not match the grid")
    MfgState(np.zeros(grid.shape), m0)  # validates mass and sign
    if terminal is None:
        terminal = prob.terminal(*grid.mesh) if prob.terminal else np.zeros(grid.shape)
    K = grid.n_steps
    path = np.broadcast_to(m0, (K + 1,) + grid.shape).copy()
    residuals: list[float] = []
    converged = False
    values = policies = new = None
    for sweep in range(1, max_sweeps + 1):
        values, policies = _backward_pass(path, prob, grid, terminal)
        new = _forward_pass(m0, policies, prob, grid)
        res = float(np.abs(new - path).reshape(K + 1, -1).sum(axis=1).max())
        residuals.append(res)
        if res < tol:
            converged = True
            path = new
            break
        path = (1.0 - damping) * path + damping * new
    return MfgSolution(values, new, policies[:, 0] if policies.shape[1] == 1 else policies, sweep, residuals, converged)


# --------------------------------------------------------------------------
# particles and diagnostics


def simulate_particles(
    prob: MfgProblem,
    grid: MfgGrid,
    sol: MfgSolution,
    m0: np.ndarray,
    n_particles: int,
    seed: int = 0,
) -> np.ndarray:
    """Euler–Maruyama particles driven by the solved feedback (1-d).

    The control at a particle is read from the nearest grid node; noise is
    Gaussian with scale ``sigma * sqrt(dt)`` and the walls reflect.

    Returns
    -------
    ndarray
        Mean position at every time level.
    """
    if len(grid.axes) != 1:
        raise ShapeError("particle simulation is 1-d only")
    rng = np.random.default_rng(seed)
    x_axis = grid.axes[0]
    lo, hi, dx = x_axis[0], x_axis[-1], grid.dx[0]
    x = rng.choice(x_axis, size=n_particles, p=m0 / m0.sum())
    means = [float(x.mean())]
    for k in range(grid.n_steps):
        node = np.clip(np.rint((x - lo) / dx).astype(int), 0, x_axis.size - 1)
        u = prob.controls[sol.controls[k][node]]
        x = x + prob.drift(x, u) * grid.dt + grid.sigma * np.sqrt(grid.dt) * rng.standard_normal(n_particles)
        x = np.where(x < lo, 2 * lo - x, x)
        x = np.where(x > hi, 2 * hi - x, x)
        means.append(float(x.mean()))
    return np.array(means)


def saddle_check(payoffs: np.ndarray) -> tuple[int, int, bool]:
    """Pure saddle point of a payoff matrix (rows minimise, columns maximise).

    Returns
    -------
    (i, j, verified)
        The minimax row, its best column, and whether
        ``pi(i, j') <= pi(i, j) <= pi(i', j)`` holds for every ``i'``, ``j'``.
    """
    P = np.asarray(payoffs, dtype=float)
    if P.ndim != 2 or P.size == 0:
        raise ValidationError("payoffs must be a non-empty matrix")
    i = int(np.argmin(P.max(axis=1)))
    j = int(np.argmax(P[i]))
    v = P[i, j]
    ok = bool(np.all(P[i] <= v + 1e-12) and np.all(P[:, j] >= v - 1e-12))
    return i, j, ok


def value_sum_nonzero(value_a: np.ndarray, value_b: np.ndarray) -> float:
    """Smallest ``|V_A + V_B|`` over the grid; zero flags a zero-sum pair."""
    a = np.asarray(value_a, dtype=float)
    b = np.asarray(value_b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError("value fields live on different grids")
    return float(np.min(np.abs(a + b)))


def stability_criterion(trajectory, rho: float) -> float:
    """Discounted energy ``sum_t exp(-rho t) |F(t+1) - F(t)|^2``."""
    F = np.asarray(trajectory, dtype=float)
    if F.ndim == 0 or F.shape[0] == 0:
        raise ShapeError("trajectory is empty")
    if rho <= 0:
        raise ValidationError("rho must be positive")
    d = np.diff(F, axis=0).reshape(max(F.shape[0] - 1, 0), -1)
    t = np.arange(d.shape[0])
    return float(np.sum(np.exp(-rho * t) * np.sum(d**2, axis=1)))
