# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every public function here has a twin with the same signature and semantics
in :mod:`lossyalloc._fallback`; :mod:`lossyalloc._backend` picks one at
import time.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, floor, log, log1p, pow, sqrt

cnp.import_array()

NAME = "cython"

ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

# map codes shared with lossyalloc.objectives
cdef enum:
    IDENTITY = 0
    CUBIC = 1
    SIGNUM_POWER = 2
    LOG_QUANTIZER = 3
    UNIFORM_QUANTIZER = 4


cdef inline i64 _find(i64[::1] parent, i64 i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef inline i64 _union_pass(i64 n, const i64[::1] eu, const i64[::1] ev,
                            const u8[:] mask, i64[::1] parent) noexcept nogil:
    # returns the number of components
    cdef i64 i, e, ru, rv, comps = n
    for i in range(n):
        parent[i] = i
    for e in range(eu.shape[0]):
        if mask[e]:
            ru = _find(parent, eu[e])
            rv = _find(parent, ev[e])
            if ru != rv:
                if ru < rv:
                    parent[rv] = ru
                else:
                    parent[ru] = rv
                comps -= 1
    return comps


def component_labels_batch(i64 n, const i64[::1] eu, const i64[::1] ev,
                           const u8[:, ::1] masks):
    """Component labels for each mask row, numbered by first appearance."""
    cdef i64 T = masks.shape[0]
    cdef i64 t, i, r, nxt
    out = np.empty((T, n), dtype=np.int64)
    cdef i64[:, ::1] lab = out
    cdef i64[::1] parent = np.empty(n, dtype=np.int64)
    cdef i64[::1] remap = np.empty(n, dtype=np.int64)
    with nogil:
        for t in range(T):
            _union_pass(n, eu, ev, masks[t], parent)
            for i in range(n):
                remap[i] = -1
            nxt = 0
            for i in range(n):
                r = _find(parent, i)
                if remap[r] < 0:
                    remap[r] = nxt
                    nxt += 1
                lab[t, i] = remap[r]
    return out


def connected_batch(i64 n, const i64[::1] eu, const i64[::1] ev,
                    const u8[:, ::1] masks):
    cdef i64 T = masks.shape[0]
    cdef i64 t
    out = np.empty(T, dtype=np.uint8)
    cdef u8[::1] res = out
    cdef i64[::1] parent = np.empty(max(n, 1), dtype=np.int64)
    with nogil:
        for t in range(T):
            res[t] = _union_pass(n, eu, ev, masks[t], parent) <= 1
    return out


def sliding_union_connected(i64 n, const i64[::1] eu, const i64[::1] ev,
                            const u8[:, ::1] masks, i64 B):
    """Connectivity of the union of rows k..k+B for every start k."""
    cdef i64 K = masks.shape[0]
    cdef i64 E = masks.shape[1]
    cdef i64 W = K - B
    cdef i64 k, e
    if W <= 0:
        return np.zeros(0, dtype=np.uint8)
    out = np.empty(W, dtype=np.uint8)
    cdef u8[::1] res = out
    cdef i64[::1] counts = np.zeros(E, dtype=np.int64)
    cdef u8[::1] union = np.zeros(E, dtype=np.uint8)
    cdef i64[::1] parent = np.empty(max(n, 1), dtype=np.int64)
    with nogil:
        for k in range(B + 1):
            for e in range(E):
                counts[e] += masks[k, e]
        for k in range(W):
            if k > 0:
                for e in range(E):
                    counts[e] += masks[k + B, e] - masks[k - 1, e]
            for e in range(E):
                union[e] = counts[e] > 0
            res[k] = _union_pass(n, eu, ev, union, parent) <= 1
    return out


def jacobi_eigenvalues(double[:, ::1] A, double rel_tol, i64 max_sweeps):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    ``A`` is overwritten. Returns ``(eigenvalues_sorted, sweeps)``.
    """
    cdef i64 n = A.shape[0]
    cdef i64 p, q, k, sweep = 0
    cdef double off, norm2 = 0.0, apq, tau, t, c, s, akp, akq
    for p in range(n):
        for q in range(n):
            norm2 += A[p, q] * A[p, q]
    cdef double thresh = (rel_tol * rel_tol) * norm2
    with nogil:
        while sweep < max_sweeps:
            off = 0.0
            for p in range(n):
                for q in range(p + 1, n):
                    off += 2.0 * A[p, q] * A[p, q]
            if off <= thresh:
                break
            sweep += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if tau >= 0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        akp = A[k, p]
                        akq = A[k, q]
                        A[k, p] = c * akp - s * akq
                        A[k, q] = s * akp + c * akq
                    for k in range(n):
                        akp = A[p, k]
                        akq = A[q, k]
                        A[p, k] = c * akp - s * akq
                        A[q, k] = s * akp + c * akq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
    ev = np.sort(np.asarray([A[k, k] for k in range(n)], dtype=np.float64))
    return ev, sweep


cdef inline double _rhalf(double t) noexcept nogil:
    if t >= 0:
        return floor(t + 0.5)
    return -floor(-t + 0.5)


cdef inline double _map(int code, double p1, double p2, double z) noexcept nogil:
    cdef double az
    if code == IDENTITY:
        return z
    if code == CUBIC:
        return z + z * z * z
    if z == 0.0:
        return 0.0
    az = fabs(z)
    if code == SIGNUM_POWER:
        return z * pow(az, p1 - 1.0) + z * pow(az, p2 - 1.0)
    if code == LOG_QUANTIZER:
        az = exp(p1 * _rhalf(log(az) / p1))
    else:
        az = p1 * floor(az / p1 + 0.5)
    return az if z > 0 else -az


cdef inline double _sigmoid(double t) noexcept nogil:
    cdef double e
    if t >= 0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef inline double _softplus(double t) noexcept nogil:
    return (t if t > 0 else 0.0) + log1p(exp(-fabs(t)))


def run_block(double[::1] x,
              const i64[::1] eu, const i64[::1] ev, const double[::1] w,
              const u8[:, ::1] masks,
              const i64[::1] kind, const double[::1] a, const double[::1] c,
              const double[::1] l, const double[::1] d,
              const double[::1] lo, const double[::1] hi,
              const double[::1] gamma, const u8[::1] has_box,
              int gn_code, double gn_p1, double gn_p2,
              int gl_code, double gl_p1, double gl_p2,
              double eta, double disp_tol, i64 n_update,
              double[::1] out_F, double[::1] out_sum, i64[::1] out_count,
              double[::1] out_disp, double[:, ::1] out_x):
    """Advance the allocation dynamics over one block of link masks.

    Row ``t`` records the state before the ``t``-th update of the block; an
    update follows row ``t`` only when ``t < n_update`` and the gradient
    dispersion is not below ``disp_tol``. ``x`` is updated in place.
    Returns ``(rows_written, stopped)``.
    """
    cdef i64 n = x.shape[0]
    cdef i64 E = eu.shape[0]
    cdef i64 T = masks.shape[0]
    cdef bint keep_x = out_x.shape[0] > 0
    cdef i64 t, i, e, cnt
    cdef double F, S, mean, disp, r, flow, above, below, xi
    cdef double[::1] grad = np.empty(n, dtype=np.float64)
    cdef double[::1] q = np.empty(n, dtype=np.float64)
    cdef int stopped = 0
    with nogil:
        for t in range(T):
            F = 0.0
            S = 0.0
            mean = 0.0
            for i in range(n):
                xi = x[i]
                r = xi - c[i]
                F += 0.5 * a[i] * r * r
                grad[i] = a[i] * r
                if kind[i] == 1:
                    F += _softplus(l[i] * (xi - d[i]))
                    grad[i] += l[i] * _sigmoid(l[i] * (xi - d[i]))
                if has_box[i]:
                    above = xi - hi[i] if xi > hi[i] else 0.0
                    below = lo[i] - xi if xi < lo[i] else 0.0
                    F += gamma[i] * (above * above + below * below)
                    grad[i] += 2.0 * gamma[i] * (above - below)
                S += xi
                mean += grad[i]
                if keep_x:
                    out_x[t, i] = xi
            mean /= n
            disp = 0.0
            for i in range(n):
                disp += (grad[i] - mean) * (grad[i] - mean)
            disp = sqrt(disp)
            cnt = 0
            for e in range(E):
                cnt += masks[t, e]
            out_F[t] = F
            out_sum[t] = S
            out_count[t] = cnt
            out_disp[t] = disp
            if disp < disp_tol:
                stopped = 1
                break
            if t >= n_update:
                continue
            for i in range(n):
                q[i] = _map(gl_code, gl_p1, gl_p2, grad[i])
            for e in range(E):
                if masks[t, e]:
                    flow = eta * w[e] * _map(gn_code, gn_p1, gn_p2, q[eu[e]] - q[ev[e]])
                    x[eu[e]] -= flow
                    x[ev[e]] += flow
    if stopped:
        return t + 1, True
    return T, False
