"""Bankruptcy game: coalition worth, Shapley allocation and validity checks."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .errors import ValidationError

EXACT_LIMIT = 20


@dataclass(frozen=True)
class BankruptcyInstance:
    """An estate to be split among creditors with individual claims."""

    estate: float
    claims: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.claims, dtype=float).ravel()
        if c.size == 0:
            raise ValidationError("at least one claimant is required")
        if self.estate < 0 or np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValidationError("estate and claims must be nonnegative and finite")
        if self.estate >= c.sum() and c.sum() > 0:
            warnings.warn("estate covers every claim; the game is not contested", stacklevel=3)
        c.setflags(write=False)
        object.__setattr__(self, "claims", c)
        object.__setattr__(self, "estate", float(self.estate))

    @property
    def n_players(self) -> int:
        return self.claims.size

    @classmethod
    def from_csv(cls, path) -> "BankruptcyInstance":
        """First row holds the estate, second row the claims."""
        rows = [r for r in csv.reader(open(Path(path))) if r and not r[0].startswith("#")]
        if len(rows) < 2:
            raise ValidationError("expected an estate row and a claims row")
        return cls(float(rows[0][0]), np.array([float(v) for v in rows[1]]))


@dataclass(frozen=True)
class Allocation:
    payoffs: np.ndarray
    min_right: np.ndarray
    max_right: np.ndarray
    approximate: bool = False
    stderr: np.ndarray | None = None


def _members(inst: BankruptcyInstance, coalition: Iterable[int]) -> np.ndarray:
    idx = np.array(sorted(set(int(i) for i in coalition)), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= inst.n_players):
        raise ValidationError(f"unknown player id in {sorted(idx.tolist())}")
    return idx


def psi(inst: BankruptcyInstance, coalition: Iterable[int]) -> float:
    """Worth of a coalition: what it can secure after outsiders are paid in full,
    capped by its own total claim."""
    idx = _members(inst, coalition)
    inside = float(inst.claims[idx].sum())
    outside = float(inst.claims.sum()) - inside
    return min(inside, max(0.0, inst.estate - outside))


def rights(inst: BankruptcyInstance) -> tuple[np.ndarray, np.ndarray]:
    """Per-player minimal right ``v({i})`` and maximal right ``v(N) - v(N \\ {i})``."""
    n = inst.n_players
    full = psi(inst, range(n))
    lo = np.array([psi(inst, [i]) for i in range(n)])
    hi = np.array([full - psi(inst, [j for j in range(n) if j != i]) for i in range(n)])
    return lo, hi


def shapley(inst: BankruptcyInstance, n_samples: int = 20000, seed: int = 0) -> Allocation:
    """Shapley value of the bankruptcy game.

    Exact subset enumeration up to twenty players; beyond that, seeded
    permutation sampling with per-player standard errors (flagged approximate).
    """
    lo, hi = rights(inst)
    if inst.n_players <= EXACT_LIMIT:
        phi = kernels.shapley_bankruptcy(inst.estate, inst.claims)
        return Allocation(np.asarray(phi), lo, hi)
    rng = np.random.default_rng(seed)
    c = inst.claims
    total = c.sum()
    acc = np.zeros(c.size)
    acc2 = np.zeros(c.size)
    done = 0
    while done < n_samples:
        b = min(2000, n_samples - done)
        perm = rng.permuted(np.tile(np.arange(c.size), (b, 1)), axis=1)
        inside = np.concatenate([np.zeros((b, 1)), np.cumsum(c[perm], axis=1)], axis=1)
        v = np.minimum(inside, np.maximum(0.0, inst.estate - (total - inside)))
        marg = np.empty((b, c.size))
        np.put_along_axis(marg, perm, np.diff(v, axis=1), axis=1)
        acc += marg.sum(axis=0)
        acc2 += (marg**2).sum(axis=0)
        done += b
    mean = acc / n_samples
    se = np.sqrt(np.maximum(acc2 / n_samples - mean**2, 0.0) / n_samples)
    return Allocation(mean, lo, hi, approximate=True, stderr=se)


def shapley_by_permutations(inst: BankruptcyInstance) -> np.ndarray:
    """Exact Shapley value by averaging over every ordering (small games only)."""
    from itertools import permutations

    n = inst.n_players
    phi = np.zeros(n)
    count = 0
    for perm in permutations(range(n)):
        prev = 0.0
        seen: list[int] = []
        for i in perm:
            seen.append(i)
            cur = psi(inst, seen)
            phi[i] += cur - prev
            prev = cur
        count += 1
    return phi / count


def validate_allocation(inst: BankruptcyInstance, alloc, tol: float = 1e-9) -> dict:
    """Check efficiency, claim bounds and the min/max-right sandwich.

    Returns
    -------
    dict
        ``efficiency`` (bool) and per-player boolean arrays ``claim_bounds``
        and ``rights``, plus ``all`` combining them.
    """
    pay = np.asarray(alloc.payoffs if isinstance(alloc, Allocation) else alloc, dtype=float)
    if pay.shape != inst.claims.shape:
        raise ValidationError("allocation length differs from the number of claimants")
    lo, hi = rights(inst)
    eff = abs(pay.sum() - psi(inst, range(inst.n_players))) <= tol
    bounded = (pay >= -tol) & (pay <= inst.claims + tol)
    sandwich = (pay >= lo - tol) & (pay <= hi + tol)
    return {
        "efficiency": bool(eff),
        "claim_bounds": bounded,
        "rights": sandwich,
        "all": bool(eff and bounded.all() and sandwich.all()),
    }


def write_report(path, inst: BankruptcyInstance, alloc: Allocation) -> None:
    """Allocation CSV with one row per player and the condition flags."""
    rep = validate_allocation(inst, alloc)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["player", "claim", "payoff", "min_right", "max_right", "within_claim", "within_rights", "efficient"])
        for i in range(inst.n_players):
            w.writerow([
                i,
                f"{inst.claims[i]:.12g}",
                f"{alloc.payoffs[i]:.12g}",
                f"{alloc.min_right[i]:.12g}",
                f"{alloc.max_right[i]:.12g}",
                int(rep["claim_bounds"][i]),
                int(rep["rights"][i]),
                int(rep["efficiency"]),
            ])


def bankruptcy_event_probability(rate_trajectories, k_b: int) -> float:
    """Share of trajectories whose rate stays positive before ``k_b`` and is
    non-positive from ``k_b`` on.

    Parameters
    ----------
    rate_trajectories : array_like, shape (T,) or (runs, T)
    k_b : int
        Bankruptcy time index, ``0 <= k_b <= T``.
    """
    R = np.atleast_2d(np.asarray(rate_trajectories, dtype=float))
    T = R.shape[1]
    if not 0 <= k_b <= T:
        raise ValidationError(f"k_b={k_b} outside [0, {T}]")
    event = np.all(R[:, :k_b] > 0, axis=1) & np.all(R[:, k_b:] <= 0, axis=1)
    return float(event.mean())
