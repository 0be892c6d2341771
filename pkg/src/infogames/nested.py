"""Nested games over a bankruptcy horizon.

Players are the creditors of a coalition. After the bankruptcy time each
player steers a discrete level ``theta`` (its repayment ratio) over the
remaining horizon; the allocation fixed by the Shapley layer is what the
population is supposed to end at. Two coordination schemes close the loop
between the players' end-of-horizon distribution and the allocation:

* ``solve_bilevel_admm``: consensus ADMM in which both the players' side and
  the allocation side move, with a dual variable acting on the players'
  terminal targets.
* ``solve_trilevel_kuramoto``: the allocation is a fixed leader. Followers
  encode their terminal mismatch as a phase, a Kuramoto phase game with the
  leader contracts those phases, and each follower turns the contraction
  into a target correction using its own measured sensitivity.

Every pass over the players is counted so that per-iteration cost can be
fitted against the population size.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .bankruptcy import BankruptcyInstance, shapley
from .errors import FitDegenerateError, ValidationError

SMOOTHING_EPS = 1e-12


# --------------------------------------------------------------------------
# configuration and containers


@dataclass(frozen=True)
class NestedConfig:
    """Parameters of the nested game.

    Parameters
    ----------
    k_b, horizon : int
        Bankruptcy time index and horizon; players act for ``horizon - k_b`` steps.
    n_bobs, coalition : int
        Total claimants drawn per instance and the coalition size (largest claims).
    lam : float
        Dissatisfaction rate ``1 - estate / total claim`` of the coalition.
    sigma : float
        Size of the symmetric level shock after each step.
    admm_rho : float
        ADMM penalty weight.
    major_weight : float
        Stiffness of the allocation side in the ADMM consensus step.
    coupling : float
        Phase-game coupling gain ``D``.
    """

    k_b: int = 6
    horizon: int = 60
    n_bobs: int = 9
    coalition: int = 5
    lam: float = 0.3
    sigma: float = 0.05
    admm_rho: float = 1.0
    major_weight: float = 1.0
    coupling: float = 1.0
    tol: float = 1e-4
    max_iter: int = 200
    n_levels: int = 33
    level_max: float = 1.25
    temperature: float = 0.02
    claim_weight: float = 1.0
    adjust_weight: float = 1.0
    mean_weight: float = 1.0
    terminal_weight: float = 1.0
    noise: str = "bernoulli"
    coherence_tol: float = 1e-3

    def __post_init__(self):
        if not 0 < self.k_b <= self.horizon:
            raise ValidationError("need 0 < k_b <= horizon")
        if not 1 <= self.coalition <= self.n_bobs:
            raise ValidationError("need 1 <= coalition <= n_bobs")
        if not 0.0 <= self.lam < 1.0:
            raise ValidationError("lam must lie in [0, 1)")
        if self.sigma < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("sigma >= 0, tol > 0 and max_iter >= 1 are required")
        if self.n_levels < 1 or self.level_max <= 0:
            raise ValidationError("level grid is empty")
        if self.noise not in ("bernoulli", "gaussian"):
            raise ValidationError("noise must be 'bernoulli' or 'gaussian'")
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")

    @property
    def steps(self) -> int:
        return self.horizon - self.k_b

    @property
    def levels(self) -> np.ndarray:
        if self.n_levels == 1:
            return np.array([self.level_max])
        return np.linspace(0.0, self.level_max, self.n_levels)


@dataclass
class OpCounter:
    """Elementary-operation tally by pass type."""

    linear: float = 0.0
    sort: float = 0.0
    pairwise: float = 0.0

    def add_linear(self, n: int, passes: int = 1) -> None:
        self.linear += passes * n

    def add_sort(self, n: int) -> None:
        self.sort += n * math.log2(n) if n > 1 else 0.0

    def add_pairwise(self, n: int, passes: int = 1) -> None:
        self.pairwise += passes * n * n

    @property
    def total(self) -> float:
        return self.linear + self.sort + self.pairwise


@dataclass
class DiscreteMfgState:
    """Output of the discrete mean-field layer and its coordination loop."""

    utility: np.ndarray  # (steps + 1, N, levels) value of each player
    pmf: np.ndarray  # (steps, levels) population control law
    major_measure: np.ndarray  # (steps + 1,) weights of the allocation side over time
    controls: np.ndarray  # (steps, N) expected control per player
    terminal: np.ndarray  # (N,) expected terminal level
    allocation: np.ndarray  # (N,) Shapley payoff
    per_time_allocation: np.ndarray  # (steps, N)
    iterations: int = 0
    converged: bool = False
    residuals: list[float] = field(default_factory=list)
    ops: OpCounter = field(default_factory=OpCounter)
    ops_per_iteration: list[float] = field(default_factory=list)


@dataclass
class PhaseGameState:
    phases: np.ndarray  # (iterations + 1, N) wrapped follower phases
    pdf: np.ndarray  # density of final phases on a circular grid
    pdf_grid: np.ndarray
    major_measure: np.ndarray  # (N + 1,) coupling weights, leader last
    coherence: list[float]
    pairwise_spread: list[float]
    mfg: DiscreteMfgState


# --------------------------------------------------------------------------
# instances


def draw_instance(cfg: NestedConfig, seed: int) -> BankruptcyInstance:
    """Seeded coalition: the largest ``coalition`` of ``n_bobs`` uniform claims.

    The estate is ``(1 - lam)`` times the coalition's total claim.
    """
    rng = np.random.default_rng(seed)
    claims = np.sort(rng.uniform(20.0, 100.0, cfg.n_bobs))[::-1][: cfg.coalition]
    return BankruptcyInstance((1.0 - cfg.lam) * claims.sum(), claims)


def award_ratios(inst: BankruptcyInstance, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Shapley payoff and the awarded share ``payoff / claim`` per player."""
    alloc = shapley(inst, seed=seed).payoffs
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(inst.claims > 0, alloc / inst.claims, 1.0)
    return alloc, ratio


def interaction_weights(claims: np.ndarray) -> np.ndarray:
    """Claim-similarity weights ``exp(-|c_i - c_j| / mean c)``."""
    c = np.asarray(claims, dtype=float)
    scale = c.mean() if c.mean() > 0 else 1.0
    return np.exp(-np.abs(c[:, None] - c[None, :]) / scale)


# --------------------------------------------------------------------------
# discrete mean-field layer


def _split(values: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Linear interpolation weights of each value onto the level grid."""
    n = levels.size
    if n == 1:
        return np.ones((values.size, 1))
    v = np.clip(values, levels[0], levels[-1])
    pos = (v - levels[0]) / (levels[1] - levels[0])
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - lo
    M = np.zeros((values.size, n))
    rows = np.arange(values.size)
    M[rows, lo] += 1.0 - frac
    M[rows, lo + 1] += frac
    return M


def transition_matrix(cfg: NestedConfig) -> np.ndarray:
    """Law of the next level given the chosen control, ``theta +/- sigma``.

    ``bernoulli`` gives each sign probability one half; ``gaussian`` spreads
    the shock as a discretised normal of scale ``sigma``.
    """
    G = cfg.levels
    if cfg.sigma == 0 or G.size == 1:
        return np.eye(G.size)
    if cfg.noise == "bernoulli":
        return 0.5 * (_split(G + cfg.sigma, G) + _split(G - cfg.sigma, G))
    shocks = np.linspace(-3.0, 3.0, 13)
    w = np.exp(-0.5 * shocks**2)
    w /= w.sum()
    return sum(wi * _split(G + s * cfg.sigma, G) for wi, s in zip(w, shocks))


def mfg_layer(cfg, start, targets, reference, counter: OpCounter | None = None):
    """Backward soft Bellman pass and forward population pass for all players.

    Parameters
    ----------
    start : ndarray (N,)
        Initial level of every player.
    targets : ndarray (N,)
        Terminal target of every player.
    reference : ndarray (steps, N)
        Mean-field level each player compares its control to.

    Returns
    -------
    utility : ndarray (steps + 1, N, levels)
    terminal_mean : ndarray (N,)
    control_mean : ndarray (steps, N)
    pmf : ndarray (steps, levels)
    """
    G = cfg.levels
    T = cfg.steps
    N = start.size
    TR = transition_matrix(cfg)
    base = -(cfg.claim_weight * (1.0 - G)[None, :] ** 2 + cfg.adjust_weight * (G[None, :] - G[:, None]) ** 2) / T
    U = np.empty((T + 1, N, G.size))
    U[T] = -0.5 * cfg.terminal_weight * (G[None, :] - targets[:, None]) ** 2
    policies = np.empty((T, N, G.size, G.size))
    for k in range(T - 1, -1, -1):
        reward = base[None] - cfg.mean_weight * (G[None, None, :] - reference[k][:, None, None]) ** 2 / T
        Q = reward + (U[k + 1] @ TR.T)[:, None, :]
        Qmax = Q.max(axis=-1, keepdims=True)
        if cfg.temperature > 0:
            e = np.exp((Q - Qmax) / cfg.temperature)
            Z = e.sum(axis=-1, keepdims=True)
            policies[k] = e / Z
            U[k] = (Qmax + cfg.temperature * np.log(Z))[..., 0]
        else:
            # greedy; the first maximiser is the smallest level
            idx = np.argmax(Q, axis=-1)
            policies[k] = np.eye(G.size)[idx]
            U[k] = Qmax[..., 0]
    P = _split(start, G)
    ctrl = np.empty((T, N))
    pmf = np.empty((T, G.size))
    for k in range(T):
        pc = np.einsum("ns,nsc->nc", P, policies[k])
        ctrl[k] = pc @ G
        pmf[k] = pc.mean(axis=0)
        P = pc @ TR
    if counter is not None:
        counter.add_linear(N)  # value pass
        counter.add_linear(N)  # population pass
    return U, P @ G, ctrl, pmf


def mean_field_reference(controls: np.ndarray, weights: np.ndarray, counter=None) -> np.ndarray:
    """Interaction-weighted average of everyone's controls, per player and time."""
    if counter is not None:
        counter.add_pairwise(weights.shape[0])
    return controls @ weights.T / weights.sum(axis=1)


# --------------------------------------------------------------------------
# divergence between the two sides


def silverman_bandwidth(values: np.ndarray, floor: float, counter=None) -> float:
    """Rule-of-thumb bandwidth ``0.9 min(std, IQR / 1.34) n^(-1/5)``."""
    v = np.sort(np.asarray(values, dtype=float))
    if counter is not None:
        counter.add_sort(v.size)
    n = v.size
    if n < 2:
        return floor
    q1 = v[int(0.25 * (n - 1))]
    q3 = v[int(0.75 * (n - 1))]
    spread = min(float(v.std()), (q3 - q1) / 1.34) if q3 > q1 else float(v.std())
    return max(floor, 0.9 * spread * n ** (-0.2))


def kernel_pmf(values: np.ndarray, levels: np.ndarray, bandwidth: float) -> np.ndarray:
    """Gaussian-kernel estimate of the law of ``values`` on the level grid."""
    if levels.size == 1:
        return np.ones(1)
    w = np.exp(-0.5 * ((levels[None, :] - np.asarray(values)[:, None]) / bandwidth) ** 2)
    w /= np.maximum(w.sum(axis=1, keepdims=True), 1e-300)
    return w.mean(axis=0)


def divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence in nats; zero reference mass triggers epsilon smoothing."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) & (p > 0)):
        warnings.warn("reference law has empty cells; smoothing with 1e-12", RuntimeWarning, stacklevel=2)
        p = (p + SMOOTHING_EPS) / (p + SMOOTHING_EPS).sum()
        q = (q + SMOOTHING_EPS) / (q + SMOOTHING_EPS).sum()
    mask = p > 0
    return float(max(0.0, np.sum(p[mask] * np.log(p[mask] / q[mask]))))


def _grid_step(cfg: NestedConfig) -> float:
    G = cfg.levels
    return float(G[1] - G[0]) if G.size > 1 else 1.0


def side_divergence(cfg, a, b, counter=None, sorted_b_bandwidth=None) -> float:
    """Divergence between the kernel laws of two samples with a shared bandwidth."""
    floor = _grid_step(cfg)
    ha = silverman_bandwidth(a, floor, counter)
    hb = sorted_b_bandwidth if sorted_b_bandwidth is not None else silverman_bandwidth(b, floor, counter)
    h = max(ha, hb)
    return divergence(kernel_pmf(a, cfg.levels, h), kernel_pmf(b, cfg.levels, h))


def _per_time_allocation(inst: BankruptcyInstance, controls: np.ndarray, seed: int) -> np.ndarray:
    """Shapley split of the budget realised by the expected controls at each step.

    The budget at step ``k`` is ``sum_i c_i * theta_i(k)`` capped at the estate.
    """
    out = np.empty_like(controls)
    for k, theta in enumerate(controls):
        budget = float(min(inst.estate, np.sum(inst.claims * np.clip(theta, 0.0, 1.0))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sub = BankruptcyInstance(budget, inst.claims)
        out[k] = shapley(sub, seed=seed).payoffs
    return out


# --------------------------------------------------------------------------
# coordination loops


def solve_bilevel_admm(cfg: NestedConfig, inst: BankruptcyInstance, seed: int = 0) -> DiscreteMfgState:
    """Consensus ADMM between the players' terminal levels and the allocation.

    Per iteration: a value and population pass with targets ``z - u``, a
    mean-field refresh, the consensus step
    ``z = (g * ratio + rho * (x + u)) / (g + rho)`` projected on the level
    interval, the dual step ``u += x - z``, and the divergence between the
    kernel laws of ``x`` and ``z``.
    """
    alloc, ratio = award_ratios(inst, seed)
    G = cfg.levels
    N = ratio.size
    W = interaction_weights(inst.claims)
    counter = OpCounter()
    z = np.clip(ratio, G[0], G[-1])
    u = np.zeros(N)
    ref = np.tile(W @ ratio / W.sum(axis=1), (cfg.steps, 1))
    residuals: list[float] = []
    per_iter: list[float] = []
    converged = False
    for it in range(1, cfg.max_iter + 1):
        before = counter.total
        U, x, ctrl, pmf = mfg_layer(cfg, ratio, z - u, ref, counter)
        ref = mean_field_reference(ctrl, W, counter)
        z = np.clip((cfg.major_weight * ratio + cfg.admm_rho * (x + u)) / (cfg.major_weight + cfg.admm_rho), G[0], G[-1])
        u = u + x - z
        counter.add_linear(N)  # consensus and dual step
        res = side_divergence(cfg, x, z, counter)
        residuals.append(res)
        per_iter.append(counter.total - before)
        if res < cfg.tol:
            converged = True
            break
    major = np.zeros(cfg.steps + 1)
    major[0] = 1.0
    return DiscreteMfgState(
        utility=U, pmf=pmf, major_measure=major, controls=ctrl, terminal=x,
        allocation=alloc, per_time_allocation=_per_time_allocation(inst, ctrl, seed),
        iterations=it, converged=converged, residuals=residuals, ops=counter,
        ops_per_iteration=per_iter,
    )


def pairwise_phase_spread(phases: np.ndarray) -> float:
    """Sum of circular distances ``|phi_i - phi_j|`` over unordered pairs."""
    phi = np.asarray(phases, dtype=float)
    d = np.abs(np.angle(np.exp(1j * (phi[:, None] - phi[None, :]))))
    return float(d.sum() / 2.0)


def phase_game(
    phases: np.ndarray,
    omegas: np.ndarray,
    coupling: float,
    window: float,
    leader_phase: float | None = 0.0,
    leader_weight: float = 1.0,
    counter: OpCounter | None = None,
):
    """Integrate follower phases over one window of the phase game.

    The leader, when present, is an extra oscillator that does not move.
    The step is chosen so that ``coupling * dt <= 0.1``.

    Returns
    -------
    trajectory : ndarray (steps + 1, N)
        Unwrapped follower phases.
    spread : list of float
        Pairwise phase spread after every step.
    """
    phi = np.asarray(phases, dtype=float)
    om = np.asarray(omegas, dtype=float)
    N = phi.size
    dt = min(0.1, 0.1 / abs(coupling)) if coupling != 0 else 0.1
    n_steps = max(1, int(math.ceil(window / dt)))
    dt = window / n_steps
    if leader_phase is None:
        traj = kernels.kuramoto_rk4(phi, om, coupling, dt, n_steps)
    else:
        # leader as oscillator N with a huge inertia: its row of the
        # adjacency is zero, its column carries the leader weight
        adj = np.ones((N + 1, N + 1))
        adj[N, :] = 0.0
        adj[:, N] = leader_weight
        full = kernels.kuramoto_rk4(
            np.append(phi, leader_phase), np.append(om, 0.0), coupling, dt, n_steps, adj
        )
        traj = full[:, :N]
    if counter is not None:
        # the fixed leader's pull is evaluated inside the follower kernel
        counter.add_pairwise(N, passes=4 * n_steps)
    spread = [pairwise_phase_spread(p) for p in traj]
    return traj, spread


def solve_trilevel_kuramoto(
    cfg: NestedConfig,
    inst: BankruptcyInstance,
    coupling: float | None = None,
    seed: int = 0,
) -> PhaseGameState:
    """Leader-follower coordination through a Kuramoto phase game.

    Each follower maps its terminal mismatch ``m - ratio`` to a phase in
    ``(-pi, pi]``. The phase game runs over the remaining horizon with the
    allocation as a fixed leader at phase zero, which contracts every phase.
    A follower converts the contracted mismatch into a target change using
    its own secant estimate of how its terminal level responds to its target.
    Stops once the divergence to the allocation law is below ``tol`` and the
    coherence has settled.
    """
    D = cfg.coupling if coupling is None else coupling
    alloc, ratio = award_ratios(inst, seed)
    G = cfg.levels
    N = ratio.size
    W = interaction_weights(inst.claims)
    counter = OpCounter()
    scale = np.pi / max(cfg.level_max, 1e-12)
    floor = _grid_step(cfg)
    h_alloc = silverman_bandwidth(ratio, floor)  # fixed side, computed once
    targets = ratio.copy()
    ref = np.tile(W @ ratio / W.sum(axis=1), (cfg.steps, 1))
    slope = np.ones(N)
    prev = None
    phase_hist = []
    coherence: list[float] = []
    spread_hist: list[float] = []
    residuals: list[float] = []
    per_iter: list[float] = []
    converged = False
    for it in range(1, cfg.max_iter + 1):
        before = counter.total
        U, m, ctrl, pmf = mfg_layer(cfg, ratio, targets, ref, counter)
        ref = mean_field_reference(ctrl, W, counter)
        res = side_divergence(cfg, m, ratio, counter, sorted_b_bandwidth=h_alloc)
        residuals.append(res)
        mismatch = m - ratio
        phi = np.clip(scale * mismatch, -np.pi, np.pi)
        r = float(abs(np.exp(1j * phi).mean()))
        phase_hist.append(np.mod(phi, 2 * np.pi))
        settled = len(coherence) > 0 and abs(r - coherence[-1]) < cfg.coherence_tol
        coherence.append(r)
        if res < cfg.tol and (settled or it == 1):
            per_iter.append(counter.total - before)
            converged = True
            break
        if prev is not None:
            dt_ = targets - prev[0]
            moved = np.abs(dt_) > 1e-12
            slope[moved] = np.clip((m - prev[1])[moved] / dt_[moved], 0.05, 2.0)
        traj, spread = phase_game(phi, np.zeros(N), D, float(cfg.steps), 0.0, 1.0, counter)
        spread_hist.append(spread[-1])
        new_mismatch = traj[-1] / scale
        prev = (targets.copy(), m.copy())
        targets = np.clip(targets + (new_mismatch - mismatch) / slope, G[0] - G[-1], 2 * G[-1])
        per_iter.append(counter.total - before)
    pdf_grid = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    final = phase_hist[-1]
    kappa = 8.0
    dens = np.exp(kappa * np.cos(pdf_grid[None, :] - final[:, None])).mean(axis=0)
    dens /= dens.sum() * (pdf_grid[1] - pdf_grid[0])
    state = DiscreteMfgState(
        utility=U, pmf=pmf, major_measure=np.append(np.full(N, 1.0 / (N + 1)), 1.0 / (N + 1)),
        controls=ctrl, terminal=m, allocation=alloc,
        per_time_allocation=_per_time_allocation(inst, ctrl, seed),
        iterations=it, converged=converged, residuals=residuals, ops=counter,
        ops_per_iteration=per_iter,
    )
    return PhaseGameState(
        phases=np.array(phase_hist), pdf=dens, pdf_grid=pdf_grid,
        major_measure=state.major_measure, coherence=coherence,
        pairwise_spread=spread_hist, mfg=state,
    )


# --------------------------------------------------------------------------
# reporting


@dataclass(frozen=True)
class CostFit:
    linear: float
    nlogn: float
    quadratic: float
    r2: float
    residual: float


def fit_cost_model(sizes, ops) -> CostFit:
    """Least squares ``ops ~ a N + b N log2 N + c N^2``."""
    N = np.asarray(sizes, dtype=float)
    y = np.asarray(ops, dtype=float)
    if np.unique(N).size < 3:
        raise FitDegenerateError("need at least three distinct sizes")
    A = np.column_stack([N, N * np.log2(N), N**2])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return CostFit(float(coef[0]), float(coef[1]), float(coef[2]), r2, math.sqrt(ss_res / y.size))


def complexity_counters(run_log) -> CostFit:
    """Fit the cost model to ``(N, ops)`` records of instrumented runs."""
    rows = list(run_log)
    if not rows:
        raise FitDegenerateError("empty run log")
    return fit_cost_model([r[0] for r in rows], [r[1] for r in rows])


def iteration_cdf(runs) -> list[tuple[float, float]]:
    """Empirical CDF as ``(value, P[X <= value])`` at every distinct value."""
    x = np.sort(np.asarray(list(runs), dtype=float))
    if x.size == 0:
        raise ValidationError("no runs")
    vals, counts = np.unique(x, return_counts=True)
    return [(float(v), float(c)) for v, c in zip(vals, np.cumsum(counts) / x.size)]


def cdf_at(runs, points) -> np.ndarray:
    """Evaluate the empirical CDF of ``runs`` at the given points."""
    x = np.sort(np.asarray(list(runs), dtype=float))
    return np.searchsorted(x, np.asarray(points, dtype=float), side="right") / x.size


def write_cdf(path, runs, label_cols: dict | None = None) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        labels = label_cols or {}
        w.writerow(list(labels) + ["iterations", "cdf"])
        for v, p in iteration_cdf(runs):
            w.writerow(list(labels.values()) + [f"{v:g}", f"{p:.6f}"])
