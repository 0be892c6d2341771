# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, fmin, fmax

cnp.import_array()


def causal_convolve(w, x):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], nw = wv.shape[0], k, j, top
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double acc
    for k in range(n):
        acc = 0.0
        top = k if k < nw - 1 else nw - 1
        for j in range(top + 1):
            acc += wv[j] * xv[k - j]
        o[k] = acc
    return out


def fpk_steps(m, p_up, p_dn, int n_steps, bint periodic=False):
    out = np.array(m, dtype=np.float64)
    cdef double[::1] mv = out
    cdef const double[::1] up = np.ascontiguousarray(p_up, dtype=np.float64)
    cdef const double[::1] dn = np.ascontiguousarray(p_dn, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0], i
    cdef int s
    cdef double face, wrap, cur, nxt
    for s in range(n_steps):
        # every face flux uses pre-step values; cur carries the old cell i
        wrap = mv[n - 1] * up[n - 1] - mv[0] * dn[0] if periodic else 0.0
        cur = mv[0]
        for i in range(n - 1):
            nxt = mv[i + 1]
            face = cur * up[i] - nxt * dn[i + 1]
            mv[i] -= face
            mv[i + 1] += face
            cur = nxt
        if periodic:
            mv[n - 1] -= wrap
            mv[0] += wrap
    return out


cdef void _coupling(double[::1] phi, double D, const double[:, ::1] adj, bint masked,
                    const double[::1] om, double[::1] out) nogil:
    cdef Py_ssize_t n = phi.shape[0], i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if masked:
                acc += adj[i, j] * sin(phi[j] - phi[i])
            else:
                acc += sin(phi[j] - phi[i])
        out[i] = om[i] + D / n * acc


def kuramoto_rk4(phases, omegas, double D, double dt, int n_steps, adj=None):
    cdef Py_ssize_t n = len(phases), i
    cdef int k
    cdef double[::1] phi = np.array(phases, dtype=np.float64)
    cdef const double[::1] om = np.ascontiguousarray(omegas, dtype=np.float64)
    cdef bint masked = adj is not None
    cdef const double[:, ::1] a = np.ascontiguousarray(adj if masked else np.zeros((1, 1)), dtype=np.float64)
    cdef double[::1] k1 = np.empty(n), k2 = np.empty(n), k3 = np.empty(n), k4 = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    traj = np.empty((n_steps + 1, n))
    cdef double[:, ::1] tr = traj
    for i in range(n):
        tr[0, i] = phi[i]
    for k in range(n_steps):
        _coupling(phi, D, a, masked, om, k1)
        for i in range(n):
            tmp[i] = phi[i] + 0.5 * dt * k1[i]
        _coupling(tmp, D, a, masked, om, k2)
        for i in range(n):
            tmp[i] = phi[i] + 0.5 * dt * k2[i]
        _coupling(tmp, D, a, masked, om, k3)
        for i in range(n):
            tmp[i] = phi[i] + dt * k3[i]
        _coupling(tmp, D, a, masked, om, k4)
        for i in range(n):
            phi[i] = phi[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
            tr[k + 1, i] = phi[i]
    return traj


def shapley_bankruptcy(double estate, claims):
    cdef const double[::1] c = np.ascontiguousarray(claims, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], i, s
    cdef long long mask, full = 1LL << n
    cdef double total = 0.0
    for i in range(n):
        total += c[i]
    vals = np.empty(full)
    sizes = np.empty(full, dtype=np.int32)
    cdef double[::1] v = vals
    cdef int[::1] sz = sizes
    cdef double inside
    cdef int cnt
    for mask in range(full):
        inside = 0.0
        cnt = 0
        for i in range(n):
            if mask >> i & 1:
                inside += c[i]
                cnt += 1
        v[mask] = fmin(inside, fmax(0.0, estate - (total - inside)))
        sz[mask] = cnt
    # weights s!(n-s-1)!/n! built by recursion to stay in floating point
    w_arr = np.empty(n)
    cdef double[::1] w = w_arr
    w[0] = 1.0 / n
    for s in range(1, n):
        w[s] = w[s - 1] * s / (n - s)
    phi = np.zeros(n)
    cdef double[::1] ph = phi
    for mask in range(full):
        for i in range(n):
            if not (mask >> i & 1):
                ph[i] += w[sz[mask]] * (v[mask | (1LL << i)] - v[mask])
    return phi


cdef bint _has_memory(const double[::1] g):
    cdef Py_ssize_t j
    if g.shape[0] < 2:
        return False
    if g[1] != -1.0:
        return True
    for j in range(2, g.shape[0]):
        if g[j] != 0.0:
            return True
    return False


def hjb_pass_1d(cost, drift, terminal, double dx, double diff, double scale, g, order, bint maximise):
    cdef const double[:, :, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(drift, dtype=np.float64)
    cdef const double[::1] gw = np.ascontiguousarray(g, dtype=np.float64)
    cdef const long[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t K = c.shape[0], nu = c.shape[1], n = c.shape[2]
    cdef Py_ssize_t k, i, a, j, u
    values = np.empty((K + 1, n))
    policy = np.empty((K, n), dtype=np.int64)
    cdef double[:, ::1] V = values
    cdef long[:, ::1] P = policy
    cdef bint memory = _has_memory(gw)
    cdef double inv_dx = 1.0 / dx, dd = diff / (dx * dx)
    cdef double best, q, up, dn, fwd, bwd, H, gsum, acc
    cdef Py_ssize_t best_u
    for i in range(n):
        V[K, i] = terminal[i]
    for k in range(K - 1, -1, -1):
        gsum = 0.0
        if memory:
            for j in range(1, K - k + 1):
                gsum += gw[j]
        for i in range(n):
            fwd = V[k + 1, i + 1] - V[k + 1, i] if i < n - 1 else 0.0
            bwd = V[k + 1, i - 1] - V[k + 1, i] if i > 0 else 0.0
            best_u = -1
            best = 0.0
            for a in range(nu):
                u = od[a]
                up = (b[u, i] if b[u, i] > 0 else 0.0) * inv_dx + dd
                dn = (-b[u, i] if b[u, i] < 0 else 0.0) * inv_dx + dd
                if i == n - 1:
                    up = 0.0
                if i == 0:
                    dn = 0.0
                q = c[k, u, i] + up * fwd + dn * bwd
                if best_u < 0 or (maximise and q > best) or (not maximise and q < best):
                    best = q
                    best_u = u
            H = best
            if memory:
                acc = (1.0 + gsum) * V[K, i]
                for j in range(1, K - k + 1):
                    acc -= gw[j] * V[k + j, i]
            else:
                acc = V[k + 1, i]
            V[k, i] = acc + scale * H
            P[k, i] = best_u
    return values, policy


def fpk_pass_1d(m0, drift, policy, double dx, double diff, double scale, g):
    cdef const double[:, ::1] b = np.ascontiguousarray(drift, dtype=np.float64)
    cdef const long[:, ::1] P = np.ascontiguousarray(policy, dtype=np.int64)
    cdef const double[::1] gw = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t K = P.shape[0], n = P.shape[1], k, i, j
    dens = np.empty((K + 1, n))
    cdef double[:, ::1] M = dens
    cdef bint memory = _has_memory(gw)
    cdef double inv_dx = 1.0 / dx, dd = diff / (dx * dx)
    cdef double face, gsum, acc, bu, bd, up_i, dn_n
    moved_arr = np.empty(n)
    cdef double[::1] moved = moved_arr
    for i in range(n):
        M[0, i] = m0[i]
    for k in range(K):
        for i in range(n):
            moved[i] = 0.0
        for i in range(n - 1):
            bu = b[P[k, i], i]
            bd = b[P[k, i + 1], i + 1]
            up_i = ((bu if bu > 0 else 0.0) * inv_dx + dd) * scale
            dn_n = ((-bd if bd < 0 else 0.0) * inv_dx + dd) * scale
            face = M[k, i] * up_i - M[k, i + 1] * dn_n
            moved[i] -= face
            moved[i + 1] += face
        gsum = 0.0
        if memory:
            for j in range(1, k + 2):
                gsum += gw[j]
        for i in range(n):
            if memory:
                acc = (1.0 + gsum) * M[0, i]
                for j in range(1, k + 2):
                    acc -= gw[j] * M[k + 1 - j, i]
            else:
                acc = M[k, i]
            M[k + 1, i] = acc + moved[i]
    return dens
