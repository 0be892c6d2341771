"""Fuzzy c-means on the probability simplex with a KL distortion.

Objective ``J(U, C) = sum_ij mu_ij^m KL(s_j || c_i)`` in nats. Both block
updates are exact minimisers, so alternating them never increases ``J``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, ValidationError

TOL = 1e-9


@dataclass(frozen=True)
class FuzzyInstance:
    """Data points on the simplex (rows), cluster count and fuzzifier."""

    data: np.ndarray
    q: int
    m: float = 2.0

    def __post_init__(self):
        S = np.asarray(self.data, dtype=float)
        if S.ndim != 2:
            raise ValidationError("data must be a matrix with one point per row")
        if np.any(S < 0) or np.any(np.abs(S.sum(axis=1) - 1.0) > TOL):
            raise ValidationError("every data row must be a probability vector")
        if not 1 <= self.q <= S.shape[0]:
            raise ValidationError("cluster count must lie in [1, number of points]")
        if not self.m > 1.0:
            raise ValidationError("fuzzifier must exceed 1")
        S.setflags(write=False)
        object.__setattr__(self, "data", S)

    @property
    def k(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_csv(cls, path, q: int, m: float = 2.0) -> "FuzzyInstance":
        return cls(np.loadtxt(Path(path), delimiter=",", ndmin=2), q, m)


@dataclass
class FuzzyState:
    memberships: np.ndarray  # (q, k), columns sum to one
    centers: np.ndarray  # (q, n)


@dataclass
class FuzzyFit:
    state: FuzzyState
    objective: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def kl_matrix(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """``D[i, j] = KL(s_j || c_i)`` in nats.

    Raises
    ------
    DomainError
        When a center is zero where a data point has mass.
    """
    S = np.asarray(data, dtype=float)
    C = np.asarray(centers, dtype=float)
    pos = S > 0
    if np.any((C[:, None, :] <= 0) & pos[None, :, :]):
        raise DomainError("a center vanishes where a data point has mass")
    logS = np.where(pos, np.log(np.where(pos, S, 1.0)), 0.0)
    logC = np.log(np.where(C > 0, C, 1.0))
    # sum_x s(x) log s(x) - sum_x s(x) log c(x), with 0 log 0 = 0
    neg_ent = (S * logS).sum(axis=1)
    cross = np.einsum("jx,ix->ij", np.where(pos, S, 0.0), logC)
    return np.maximum(neg_ent[None, :] - cross, 0.0)


def objective(inst: FuzzyInstance, state: FuzzyState) -> float:
    """``sum_ij mu_ij^m KL(s_j || c_i)``."""
    D = kl_matrix(inst.data, state.centers)
    return float(np.sum(state.memberships**inst.m * D))


def l2_penalty(centers: np.ndarray) -> float:
    """Default regulariser: squared distance of the centers to uniform."""
    C = np.asarray(centers, dtype=float)
    return float(np.sum((C - 1.0 / C.shape[1]) ** 2))


def penalized_objective(
    inst: FuzzyInstance,
    state: FuzzyState,
    weight: float,
    penalty: Callable[[np.ndarray], float] = l2_penalty,
) -> float:
    """Convex blend ``weight * J + (1 - weight) * penalty(centers)``."""
    if not 0.0 <= weight <= 1.0:
        raise ValidationError("weight must lie in [0, 1]")
    return weight * objective(inst, state) + (1.0 - weight) * penalty(state.centers)


def update_memberships(inst: FuzzyInstance, centers: np.ndarray) -> np.ndarray:
    """Column-wise minimiser of ``J`` for fixed centers.

    Points at zero distance from one or more centers are split evenly among
    those centers.
    """
    D = kl_matrix(inst.data, centers)
    zero = D <= 1e-15
    U = np.empty_like(D)
    crisp = zero.any(axis=0)
    if np.any(crisp):
        Z = zero[:, crisp].astype(float)
        U[:, crisp] = Z / Z.sum(axis=0)
    if np.any(~crisp):
        Dn = D[:, ~crisp]
        # scale by the column minimum before the power to avoid overflow
        W = (Dn / Dn.min(axis=0)) ** (-1.0 / (inst.m - 1.0))
        U[:, ~crisp] = W / W.sum(axis=0)
    return U


def update_centers(inst: FuzzyInstance, U: np.ndarray) -> np.ndarray:
    """Weighted means ``c_i = sum_j mu_ij^m s_j / sum_j mu_ij^m``."""
    W = np.asarray(U, dtype=float) ** inst.m
    rows = W.sum(axis=1)
    if np.any(rows <= 0):
        raise ValidationError("a cluster has no membership mass")
    C = W @ inst.data / rows[:, None]
    return C / C.sum(axis=1, keepdims=True)


def fit(inst: FuzzyInstance, tol: float = 1e-10, max_iter: int = 500, seed: int = 0) -> FuzzyFit:
    """Alternating optimisation from seeded random memberships.

    Each iteration updates the centers and then the memberships; the trace
    records ``J`` after every full alternation.
    """
    rng = np.random.default_rng(seed)
    U = rng.dirichlet(np.ones(inst.q), size=inst.k).T
    C = update_centers(inst, U)
    U = update_memberships(inst, C)
    J = objective(inst, FuzzyState(U, C))
    trace = [J]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        C = update_centers(inst, U)
        U = update_memberships(inst, C)
        J_new = objective(inst, FuzzyState(U, C))
        trace.append(J_new)
        delta = abs(J - J_new)
        J = J_new
        if delta < tol:
            converged = True
            break
    return FuzzyFit(FuzzyState(U, C), J, it, converged, trace)


def write_state(path, state: FuzzyState) -> None:
    """Centers followed by memberships, one labelled row per vector."""
    with open(Path(path), "w") as fh:
        fh.write("kind,index,values\n")
        for i, c in enumerate(state.centers):
            fh.write("center,%d,%s\n" % (i, " ".join(f"{v:.12g}" for v in c)))
        for i, u in enumerate(state.memberships):
            fh.write("membership,%d,%s\n" % (i, " ".join(f"{v:.12g}" for v in u)))
