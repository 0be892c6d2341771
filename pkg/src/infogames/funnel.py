"""Privacy funnel: choose ``P(Y|X)`` minimising ``I(S;Y)`` under a utility floor.

The solver treats every input symbol ``x`` as an agent that owns one row of
the channel. Agents only see the shared posterior ``p(s|y)`` and output law
``p(y)`` (the "header" statistics), update their own row with an exponential
form, and the multiplier is tuned by bisection so the utility floor holds.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, ValidationError
from .prob import (
    Channel,
    JointPmf,
    Pmf,
    entropy,
    information_pair,
    kl_divergence,
    mutual_information,
)

FEAS_TOL = 1e-9
HEADER_THRESHOLD = 1e-9
ETA_GROWTH = 1.5
MERGE_DIST = 1e-3
ETA_MAX = 1e3


class UtilityMode(str, Enum):
    RATE = "rate"  # I(X;Y) >= bound
    GAP = "gap"  # I(S;X) - I(S;Y) <= bound


@dataclass(frozen=True)
class FunnelProblem:
    """Funnel instance.

    Parameters
    ----------
    p_sx : JointPmf
        Joint law of the private variable ``S`` (rows) and data ``X`` (columns).
    y_size : int
        Output alphabet size.
    mode : UtilityMode
        Which utility constraint applies.
    bound : float
        ``R`` in rate mode, ``eps`` in gap mode (bits).
    """

    p_sx: JointPmf
    y_size: int
    mode: UtilityMode = UtilityMode.RATE
    bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", UtilityMode(self.mode))
        if self.y_size < 1:
            raise ValidationError("y_size must be positive")
        if self.bound < 0:
            raise ValidationError("bound must be nonnegative")
        if self.mode is UtilityMode.GAP and self.bound > mutual_information(self.p_sx) + FEAS_TOL:
            raise ValidationError("gap bound exceeds I(S;X)")
        if self.mode is UtilityMode.RATE and self.bound > self.h_x + FEAS_TOL:
            raise InfeasibleError(f"rate {self.bound} exceeds H(X) = {self.h_x}")
        if self.mode is UtilityMode.RATE and self.bound > np.log2(self.y_size) + FEAS_TOL:
            raise InfeasibleError(f"rate {self.bound} exceeds log2 of the output size")

    @property
    def n_x(self) -> int:
        return self.p_sx.shape[1]

    @property
    def h_x(self) -> float:
        return entropy(self.p_sx.marginal_b())

    @property
    def i_sx(self) -> float:
        return mutual_information(self.p_sx)


@dataclass
class FunnelSolution:
    channel: Channel
    leakage: float
    utility: float
    iterations: int
    converged: bool = True
    trace: list[tuple[float, float]] = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "leakage_bits", "utility_bits"])
            for i, (lk, ut) in enumerate(self.trace, start=1):
                w.writerow([i, f"{lk:.12g}", f"{ut:.12g}"])


# --------------------------------------------------------------------------
# constraint bookkeeping


def _stats(prob: FunnelProblem, W: np.ndarray) -> tuple[float, float]:
    return information_pair(prob.p_sx, Channel(W))


def _slack(prob: FunnelProblem, leak: float, util: float) -> float:
    """Constraint value minus its floor; feasible iff >= 0 (up to tolerance)."""
    if prob.mode is UtilityMode.RATE:
        return util - prob.bound
    return leak - (prob.i_sx - prob.bound)


def is_feasible(prob: FunnelProblem, channel: Channel, tol: float = FEAS_TOL) -> bool:
    leak, util = _stats(prob, channel.rows)
    return _slack(prob, leak, util) >= -tol


def header_rows(p_sx: JointPmf, threshold: float = HEADER_THRESHOLD) -> np.ndarray:
    """Input symbols whose posterior on ``S`` differs from the prior.

    Only these agents carry information about ``S``; the rest can keep any row
    without affecting leakage.
    """
    ps = p_sx.probs.sum(axis=1)
    px = p_sx.probs.sum(axis=0)
    out = []
    for x in range(px.size):
        if px[x] <= 0:
            continue
        if kl_divergence(Pmf(p_sx.probs[:, x] / px[x]), Pmf(ps)) > threshold:
            out.append(x)
    return np.array(out, dtype=int)


# --------------------------------------------------------------------------
# agent update


def _header_stats(p_sx: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shared statistics every agent receives: ``log p(s|y)`` and ``log p(y)``."""
    p_sy = p_sx @ W
    py = p_sy.sum(axis=0)
    post = p_sy / np.where(py > 0, py, 1.0)
    return np.log(np.maximum(post, 1e-300)), np.log(np.maximum(py, 1e-300))


def _agent_step(
    p_sx: np.ndarray, W: np.ndarray, eta: float, beta: float, mode: UtilityMode
) -> np.ndarray:
    """Exponential row update for all agents at once.

    Each row moves along ``-(grad leakage - beta * grad constraint)`` in the
    log domain, which keeps it on the simplex.
    """
    px = p_sx.sum(axis=0)
    post_x = p_sx / np.where(px > 0, px, 1.0)
    log_post_y, log_py = _header_stats(p_sx, W)
    g_leak = post_x.T @ log_post_y
    if mode is UtilityMode.RATE:
        g_con = np.log(np.maximum(W, 1e-300)) - log_py
    else:
        g_con = g_leak
    logw = np.log(np.maximum(W, 1e-300)) - eta * (g_leak - beta * g_con)
    logw -= logw.max(axis=1, keepdims=True)
    Wn = np.exp(logw)
    return Wn / Wn.sum(axis=1, keepdims=True)


@dataclass
class _Run:
    """One start of the descent; advanced one sweep at a time."""

    W: np.ndarray
    leak: float
    util: float
    eta: float
    trace: list
    sweeps: int = 0
    converged: bool = False
    active: bool = True

    def descent_trace(self, prob) -> list:
        """Trace from the first feasible iterate on; earlier sweeps only
        restore the constraint and may raise leakage."""
        for k, (lk, ut) in enumerate(self.trace):
            if _slack(prob, lk, ut) >= -FEAS_TOL:
                return self.trace[k:]
        return self.trace


def _start(prob, W, eta0=4.0) -> _Run:
    leak, util = _stats(prob, W)
    return _Run(W, leak, util, eta0, [(leak, util)])


def _sweep(prob, run: _Run, tol: float) -> None:
    """One agent sweep with the multiplier bisected onto the constraint."""
    p_sx = prob.p_sx.probs
    run.sweeps += 1

    def candidate(eta):
        def at(beta):
            Wn = _agent_step(p_sx, run.W, eta, beta, prob.mode)
            return Wn, _stats(prob, Wn)

        Wn, (ln, un) = at(0.0)
        if _slack(prob, ln, un) < 0:
            lo, hi = 0.0, 1.0
            while _slack(prob, *at(hi)[1]) < 0 and hi < 1e8:
                hi *= 2.0
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if _slack(prob, *at(mid)[1]) < 0:
                    lo = mid
                else:
                    hi = mid
            Wn, (ln, un) = at(hi)
        return Wn, ln, un

    feasible_now = _slack(prob, run.leak, run.util) >= -1e-12

    def acceptable(ln, un, ref_leak, ref_util):
        if feasible_now:
            return ln <= ref_leak + 1e-15 and _slack(prob, ln, un) >= -1e-12
        # restoring feasibility: any progress on the constraint is welcome
        return _slack(prob, ln, un) > _slack(prob, ref_leak, ref_util)

    Wn, ln, un = candidate(run.eta)
    if acceptable(ln, un, run.leak, run.util):
        # expand the step while it keeps paying off; leakage is concave
        # along the constraint, so fixed steps crawl toward vertices
        eta = run.eta
        while feasible_now and eta < ETA_MAX:
            W2, l2, u2 = candidate(2.0 * eta)
            if not (l2 < ln and acceptable(l2, u2, ln, un)):
                break
            Wn, ln, un, eta = W2, l2, u2, 2.0 * eta
        drop = run.leak - ln
        run.W, run.leak, run.util = Wn, ln, un
        run.trace.append((ln, un))
        run.eta = min(eta * ETA_GROWTH, ETA_MAX)
        if feasible_now and drop < tol:
            run.converged, run.active = True, False
    else:
        run.eta *= 0.5
        if run.eta < 1e-12:
            run.converged, run.active = feasible_now, False


def _descend(prob, W, tol, max_iter, eta0=4.0):
    """Run one start to a stationary feasible channel.

    Returns ``(W, leak, util, iterations, converged, trace)``.
    """
    run = _start(prob, W, eta0)
    while run.active and run.sweeps < max_iter:
        _sweep(prob, run, tol)
    return run.W, run.leak, run.util, run.sweeps, run.converged, run.trace


def _initial_channel(n_x: int, y_size: int, rng: np.random.Generator, noise: float = 0.01):
    if y_size >= n_x:
        W = np.eye(n_x, y_size) * (1.0 - noise) + noise * rng.random((n_x, y_size))
    else:
        W = np.full((n_x, y_size), 1.0 / y_size) + noise * rng.random((n_x, y_size))
    return W / W.sum(axis=1, keepdims=True)


def _corner_solution(prob: FunnelProblem) -> FunnelSolution | None:
    n_x, m = prob.n_x, prob.y_size
    const = Channel.constant(n_x, m)
    if prob.mode is UtilityMode.RATE and prob.bound <= 0:
        return _wrap(prob, const, 0)
    if prob.mode is UtilityMode.GAP and prob.bound >= prob.i_sx - FEAS_TOL:
        return _wrap(prob, const, 0)
    if len(header_rows(prob.p_sx)) == 0 and m >= n_x:
        return _wrap(prob, Channel.identity(n_x, m), 0)
    if m >= n_x:
        if prob.mode is UtilityMode.RATE and prob.bound >= prob.h_x - FEAS_TOL:
            return _wrap(prob, Channel.identity(n_x, m), 0)
        if prob.mode is UtilityMode.GAP and prob.bound <= 0:
            return _wrap(prob, Channel.identity(n_x, m), 0)
    return None


def _wrap(prob, channel: Channel, iterations: int, converged=True, trace=None):
    leak, util = _stats(prob, channel.rows)
    return FunnelSolution(channel, leak, util, iterations, converged, trace or [(leak, util)])


def _resolve_init(prob, init, rng) -> np.ndarray:
    if isinstance(init, Channel):
        if init.rows.shape != (prob.n_x, prob.y_size):
            raise ValidationError("initial channel has the wrong shape")
        return init.rows.copy()
    return _initial_channel(prob.n_x, prob.y_size, rng)


def solve_funnel(
    prob: FunnelProblem,
    init: Channel | int | None = 0,
    tol: float = 1e-7,
    max_iter: int = 2000,
) -> FunnelSolution:
    """Minimise leakage ``I(S;Y)`` subject to the utility constraint.

    Parameters
    ----------
    prob : FunnelProblem
    init : Channel or int
        Starting channel, or a seed for the perturbed-identity start.
    tol : float
        Stop when one accepted sweep lowers leakage by less than this.
    max_iter : int
        Budget of agent sweeps summed over all starts.

    Returns
    -------
    FunnelSolution
        ``iterations`` counts agent sweeps over every start. ``converged`` is
        False when the budget ran out first.

    Notes
    -----
    The leakage objective is concave along the feasible set once the
    multiplier exceeds one, so a single start can stall at the wrong vertex.
    Each informative agent therefore also proposes a start with its row
    relaxed halfway to uniform, and the best feasible end point wins.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    corner = _corner_solution(prob)
    if corner is not None:
        return corner
    rng = np.random.default_rng(init if isinstance(init, (int, np.integer)) else 0)
    base = _resolve_init(prob, init, rng)
    starts = [base]
    for x in header_rows(prob.p_sx):
        W = base.copy()
        W[x] = 0.5 * W[x] + 0.5 / prob.y_size
        starts.append(W)
    if prob.y_size < prob.n_x:
        # with a narrower output the near-uniform base and its relaxations
        # coincide, so spread seeded random channels instead
        starts += [rng.dirichlet(np.ones(prob.y_size), size=prob.n_x) for _ in range(prob.n_x * prob.y_size)]

    # starts advance in lockstep; a start that lands on the channel of a
    # better one is retired, so duplicated basins cost no extra sweeps
    runs = [_start(prob, W0) for W0 in starts]
    total = 0
    while any(r.active for r in runs) and total < max_iter:
        for r in runs:
            if r.active and total < max_iter:
                _sweep(prob, r, tol)
                total += 1
        feasible = [_slack(prob, r.leak, r.util) >= -FEAS_TOL for r in runs]
        for i, r in enumerate(runs):
            if not (r.active and feasible[i]):
                continue
            for j, other in enumerate(runs):
                if j == i or not feasible[j] or np.max(np.abs(other.W - r.W)) > MERGE_DIST:
                    continue
                if other.leak < r.leak or (other.leak == r.leak and j < i):
                    r.active = False
                    r.converged = True
                    break
    all_converged = all(r.converged for r in runs)
    feasible = [r for r in runs if _slack(prob, r.leak, r.util) >= -FEAS_TOL]
    if not feasible:
        raise InfeasibleError("no feasible channel reached from any start")
    r = min(feasible, key=lambda r: r.leak)
    return FunnelSolution(Channel(r.W), r.leak, r.util, total, all_converged, r.descent_trace(prob))


def greedy_baseline(
    prob: FunnelProblem,
    tol: float = 1e-7,
    max_iter: int = 5000,
    init: Channel | int | None = 0,
    step: float = 0.1,
) -> FunnelSolution:
    """Coordinate-wise local search over channel rows.

    A move shifts ``step`` mass between two outputs of one row. Rows are
    scanned in index order and the first move that lowers leakage while
    staying feasible is taken. After a sweep without any accepted move the
    step is halved; the search ends once the step drops below ``tol``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    corner = _corner_solution(prob)
    if corner is not None:
        return corner
    rng = np.random.default_rng(init if isinstance(init, (int, np.integer)) else 0)
    W = _resolve_init(prob, init, rng)
    leak, util = _stats(prob, W)
    trace = [(leak, util)]
    m = prob.y_size
    it = 0
    while it < max_iter and step >= tol:
        it += 1
        moved = False
        feasible_now = _slack(prob, leak, util) >= -FEAS_TOL
        for x in range(prob.n_x):
            for src in range(m):
                for dst in range(m):
                    if src == dst or W[x, src] <= 0:
                        continue
                    d = min(step, W[x, src])
                    Wn = W.copy()
                    Wn[x, src] -= d
                    Wn[x, dst] += d
                    ln, un = _stats(prob, Wn)
                    if feasible_now:
                        ok = ln < leak - 1e-15 and _slack(prob, ln, un) >= -FEAS_TOL
                    else:
                        ok = _slack(prob, ln, un) > _slack(prob, leak, util)
                    if ok:
                        W, leak, util = Wn, ln, un
                        moved = True
                        break
                if moved:
                    break
            if moved:
                break
        if moved:
            trace.append((leak, util))
        else:
            step *= 0.5
    converged = step < tol
    if _slack(prob, leak, util) < -FEAS_TOL:
        raise InfeasibleError("greedy search never reached the feasible set")
    return FunnelSolution(Channel(W), leak, util, it, converged, trace)


def tradeoff_sweep(
    p_sx: JointPmf,
    y_size: int,
    bounds,
    tol: float = 1e-7,
    max_iter: int = 2000,
    seed: int = 0,
):
    """Leakage/utility curve over increasing rate floors.

    Returns a list of ``(bound, leakage, utility)``; failed points carry NaN
    values so the sweep always completes.

    The minimal leakage is non-decreasing in the floor, so each point is
    also compared with the channel found for the next larger floor (which is
    feasible for the smaller one); this enforces the envelope when a start
    stalls.
    """
    bounds = [float(b) for b in bounds]
    if any(b2 < b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ValidationError("bounds must be sorted ascending")
    sols: list[FunnelSolution | None] = []
    for b in bounds:
        try:
            sols.append(solve_funnel(FunnelProblem(p_sx, y_size, UtilityMode.RATE, b), seed, tol, max_iter))
        except (InfeasibleError, ValidationError):
            sols.append(None)
    out = []
    carry = None
    for b, sol in reversed(list(zip(bounds, sols))):
        if sol is None:
            out.append((b, float("nan"), float("nan")))
            continue
        if carry is not None and carry.leakage < sol.leakage:
            sol = carry
        carry = sol
        out.append((b, sol.leakage, sol.utility))
    return out[::-1]
