"""Reference implementations of the inner loops (numpy / pure Python).

These define the semantics; the compiled module must agree with them.
"""
from __future__ import annotations

from math import factorial

import numpy as np


def causal_convolve(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``out[k] = sum_{j <= k} w[j] * x[k - j]`` for ``k < len(x)``."""
    w = np.ascontiguousarray(w, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    return np.convolve(w[: x.size], x)[: x.size]


def fpk_steps(m, p_up, p_dn, n_steps: int, periodic: bool = False) -> np.ndarray:
    """Advance a 1-d density ``n_steps`` times with fixed jump probabilities.

    Mass moves through cell faces, so the total is conserved up to rounding.
    With ``periodic`` false the walls carry no flux.
    """
    m = np.array(m, dtype=float)
    up = np.asarray(p_up, dtype=float)
    dn = np.asarray(p_dn, dtype=float)
    for _ in range(n_steps):
        if periodic:
            face = m * up - np.roll(m, -1) * np.roll(dn, -1)  # face i -> i+1
            m = m - face + np.roll(face, 1)
        else:
            face = m[:-1] * up[:-1] - m[1:] * dn[1:]
            m[:-1] -= face
            m[1:] += face
    return m


def _coupling(phi, D, adj):
    diff = np.sin(phi[None, :] - phi[:, None])
    if adj is not None:
        diff = diff * adj
    return (D / phi.size) * diff.sum(axis=1)


def kuramoto_rk4(phases, omegas, D: float, dt: float, n_steps: int, adj=None) -> np.ndarray:
    """RK4 trajectory of all-to-all (or masked) Kuramoto dynamics.

    Returns the unwrapped phases at every step, shape ``(n_steps + 1, N)``.
    """
    phi = np.array(phases, dtype=float)
    om = np.asarray(omegas, dtype=float)
    out = np.empty((n_steps + 1, phi.size))
    out[0] = phi
    for k in range(n_steps):
        k1 = om + _coupling(phi, D, adj)
        k2 = om + _coupling(phi + 0.5 * dt * k1, D, adj)
        k3 = om + _coupling(phi + 0.5 * dt * k2, D, adj)
        k4 = om + _coupling(phi + dt * k3, D, adj)
        phi = phi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = phi
    return out


def shapley_bankruptcy(estate: float, claims) -> np.ndarray:
    """Exact Shapley value of the bankruptcy game by subset enumeration."""
    c = np.asarray(claims, dtype=float)
    n = c.size
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    inside = bits @ c
    v = np.minimum(inside, np.maximum(0.0, estate - (c.sum() - inside)))
    size = bits.sum(axis=1)
    w = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) for s in range(n)])
    phi = np.empty(n)
    for i in range(n):
        without = masks[~bits[:, i]]
        phi[i] = np.sum(w[size[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def _jump_rates(b, dx, diff):
    up = np.maximum(b, 0.0) / dx + diff / dx**2
    dn = np.maximum(-b, 0.0) / dx + diff / dx**2
    up[..., -1] = 0.0
    dn[..., 0] = 0.0
    return up, dn


def hjb_pass_1d(cost, drift, terminal, dx, diff, scale, g, order, maximise):
    """Whole backward value pass on a 1-d grid.

    Parameters
    ----------
    cost : ndarray (K, n_u, n)
        Running cost per time level, control and node.
    drift : ndarray (n_u, n)
    terminal : ndarray (n,)
    scale : float
        ``dt ** alpha``.
    g : ndarray (K + 1,)
        Grünwald–Letnikov weights; ``g[1] == -1`` and the rest zero means no memory.
    order : ndarray of int
        Control scan order; the first optimum in this order wins ties.
    maximise : bool

    Returns
    -------
    values : ndarray (K + 1, n)
    policy : ndarray (K, n) of control indices
    """
    K = cost.shape[0]
    n = terminal.size
    up, dn = _jump_rates(np.asarray(drift, dtype=float), dx, diff)
    up, dn = up[order], dn[order]
    cost = cost[:, order]
    memory = not (g.size < 2 or (g[1] == -1.0 and not np.any(g[2:])))
    V = np.empty((K + 1, n))
    pol = np.empty((K, n), dtype=np.int64)
    V[K] = terminal
    for k in range(K - 1, -1, -1):
        nxt = V[k + 1]
        fwd = np.zeros(n)
        bwd = np.zeros(n)
        fwd[:-1] = nxt[1:] - nxt[:-1]
        bwd[1:] = nxt[:-1] - nxt[1:]
        q = cost[k] + up * fwd + dn * bwd
        idx = np.argmax(q, axis=0) if maximise else np.argmin(q, axis=0)
        H = q[idx, np.arange(n)]
        if memory:
            gj = g[1 : K - k + 1]
            base = (1.0 + gj.sum()) * V[K] - gj @ V[k + 1 :]
        else:
            base = nxt
        V[k] = base + scale * H
        pol[k] = order[idx]
    return V, pol


def fpk_pass_1d(m0, drift, policy, dx, diff, scale, g):
    """Whole forward density pass under a feedback policy (flux form)."""
    K = policy.shape[0]
    n = m0.size
    up, dn = _jump_rates(np.asarray(drift, dtype=float), dx, diff)
    memory = not (g.size < 2 or (g[1] == -1.0 and not np.any(g[2:])))
    cols = np.arange(n)
    M = np.empty((K + 1, n))
    M[0] = m0
    for k in range(K):
        m = M[k]
        u = up[policy[k], cols] * scale
        d = dn[policy[k], cols] * scale
        face = m[:-1] * u[:-1] - m[1:] * d[1:]
        moved = np.zeros(n)
        moved[:-1] -= face
        moved[1:] += face
        if memory:
            gj = g[1 : k + 2]
            base = (1.0 + gj.sum()) * M[0] - gj @ M[k::-1]
        else:
            base = m
        M[k + 1] = base + moved
    return M
