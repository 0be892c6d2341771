"""Finite-alphabet distributions, channels and information measures.

All measures are in bits. ``0 log 0`` is taken as zero, while a positive mass
against a zero reference is rejected instead of returning infinity.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError, ValidationError

TOL = 1e-9


def _as_float_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ShapeError(f"expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("non-finite entry")
    arr.setflags(write=False)
    return arr


def _check_mass(arr: np.ndarray, what: str) -> None:
    if arr.size == 0:
        raise ValidationError(f"{what} is empty")
    if np.any(arr < 0):
        raise ValidationError(f"{what} has a negative entry")
    total = arr.sum()
    if abs(total - 1.0) > TOL:
        raise ValidationError(f"{what} sums to {total!r}, not 1")


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over ``0..n-1``."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.probs, 1)
        _check_mass(arr, "pmf")
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.size

    @classmethod
    def normalized(cls, weights) -> "Pmf":
        """Build a Pmf by rescaling nonnegative weights (explicit helper)."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be nonnegative with positive sum")
        return cls(w / w.sum())


@dataclass(frozen=True)
class JointPmf:
    """Joint law of a pair ``(A, B)`` stored as an ``|A| x |B|`` matrix."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.probs, 2)
        _check_mass(arr, "joint pmf")
        object.__setattr__(self, "probs", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def marginal_a(self) -> Pmf:
        return Pmf(self.probs.sum(axis=1))

    def marginal_b(self) -> Pmf:
        return Pmf(self.probs.sum(axis=0))

    def transpose(self) -> "JointPmf":
        return JointPmf(self.probs.T)


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix; row ``x`` is the law of the output given ``x``."""

    rows: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.rows, 2)
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValidationError("channel is empty")
        if np.any(arr < 0):
            raise ValidationError("channel has a negative entry")
        dev = np.abs(arr.sum(axis=1) - 1.0)
        if np.any(dev > TOL):
            raise ValidationError(f"channel row {int(dev.argmax())} is not stochastic")
        object.__setattr__(self, "rows", arr)

    @property
    def n_in(self) -> int:
        return self.rows.shape[0]

    @property
    def n_out(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def identity(cls, n: int, n_out: int | None = None) -> "Channel":
        n_out = n if n_out is None else n_out
        if n_out < n:
            raise ShapeError("identity needs n_out >= n")
        return cls(np.eye(n, n_out))

    @classmethod
    def constant(cls, n: int, n_out: int) -> "Channel":
        return cls(np.full((n, n_out), 1.0 / n_out))


def _plogp_ratio(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of ``p log2(p/q)`` with the 0 log 0 convention."""
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise DomainError("absolute continuity violated: p > 0 where q = 0")
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def entropy(p: Pmf) -> float:
    """Shannon entropy in bits."""
    x = p.probs[p.probs > 0]
    return max(0.0, float(-np.sum(x * np.log2(x))))


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """Relative entropy ``D(p || q)`` in bits.

    Raises
    ------
    DomainError
        If ``p`` puts mass where ``q`` has none.
    """
    if len(p) != len(q):
        raise ShapeError("alphabets differ")
    return max(0.0, _plogp_ratio(p.probs, q.probs))


def mutual_information(j: JointPmf) -> float:
    """Mutual information between the two coordinates of a joint law."""
    p = j.probs
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    a, b = np.nonzero(p > 0)
    prod = pa[a] * pb[b]
    with np.errstate(divide="ignore"):
        # the product of two tiny marginals can underflow; use the log form there
        log_ratio = np.where(
            prod > 0,
            np.log2(p[a, b] / np.where(prod > 0, prod, 1.0)),
            np.log2(p[a, b]) - np.log2(pa[a]) - np.log2(pb[b]),
        )
    terms = p[a, b] * log_ratio
    return max(0.0, float(terms.sum()))


def compose_markov(p_sx: JointPmf, ch_yx: Channel) -> JointPmf:
    """Joint law of ``(S, Y)`` for the chain ``S -> X -> Y``."""
    if p_sx.shape[1] != ch_yx.n_in:
        raise ShapeError(
            f"channel expects {ch_yx.n_in} inputs, joint has {p_sx.shape[1]} x-symbols"
        )
    return JointPmf(p_sx.probs @ ch_yx.rows)


def distortion_gap(p_sx: JointPmf, ch_yx: Channel) -> float:
    """Information about ``S`` destroyed by the channel, ``I(S;X) - I(S;Y)``."""
    p_sy = compose_markov(p_sx, ch_yx)
    return max(0.0, mutual_information(p_sx) - mutual_information(p_sy))


def expected_posterior_kl(p_sx: JointPmf, ch_yx: Channel) -> float:
    """Mean divergence between ``p(s|x)`` and ``p(s|y)`` under ``p(x, y)``.

    Equals :func:`distortion_gap`; kept as an independent route for
    cross-checking.
    """
    p_sy = compose_markov(p_sx, ch_yx).probs
    px = p_sx.probs.sum(axis=0)
    py = p_sy.sum(axis=0)
    p_xy = px[:, None] * ch_yx.rows
    total = 0.0
    for x in range(px.size):
        if px[x] == 0:
            continue
        post_x = p_sx.probs[:, x] / px[x]
        for y in range(py.size):
            if p_xy[x, y] == 0:
                continue
            post_y = p_sy[:, y] / py[y]
            total += p_xy[x, y] * _plogp_ratio(post_x, post_y)
    return total


def information_pair(p_sx: JointPmf, ch_yx: Channel) -> tuple[float, float]:
    """Return ``(I(S;Y), I(X;Y))`` for a channel applied to ``X``."""
    px = p_sx.probs.sum(axis=0)
    leak = mutual_information(compose_markov(p_sx, ch_yx))
    util = mutual_information(JointPmf(px[:, None] * ch_yx.rows))
    return leak, util


def save_csv(path, array: np.ndarray) -> None:
    """Write a distribution as CSV rows of decimal reals."""
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    np.savetxt(Path(path), arr, delimiter=",", fmt="%.17g")


def load_pmf(path) -> Pmf:
    return Pmf(np.loadtxt(Path(path), delimiter=",", ndmin=1).ravel())


def load_joint(path) -> JointPmf:
    return JointPmf(np.loadtxt(Path(path), delimiter=",", ndmin=2))


def load_channel(path) -> Channel:
    return Channel(np.loadtxt(Path(path), delimiter=",", ndmin=2))
