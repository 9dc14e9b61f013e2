"""Pure-Python kernels.

Same signatures and semantics as the compiled ``_kernels`` extension. Used
when the extension is not built or ``LOSSYALLOC_BACKEND=python`` is set.
Results agree with the compiled path to rounding (libm and numpy may differ
in the last ulp of ``exp``/``log``), not bit-for-bit.
"""

import math

import numpy as np

NAME = "python"

IDENTITY, CUBIC, SIGNUM_POWER, LOG_QUANTIZER, UNIFORM_QUANTIZER = range(5)


def _union_pass(n, eu, ev, mask, parent):
    for i in range(n):
        parent[i] = i
    comps = n
    for e in np.flatnonzero(mask).tolist():
        ru = eu[e]
        while parent[ru] != ru:
            parent[ru] = parent[parent[ru]]
            ru = parent[ru]
        rv = ev[e]
        while parent[rv] != rv:
            parent[rv] = parent[parent[rv]]
            rv = parent[rv]
        if ru != rv:
            if ru < rv:
                parent[rv] = ru
            else:
                parent[ru] = rv
            comps -= 1
    return comps


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def component_labels_batch(n, eu, ev, masks):
    eu = np.asarray(eu).tolist()
    ev = np.asarray(ev).tolist()
    masks = np.asarray(masks)
    out = np.empty((masks.shape[0], n), dtype=np.int64)
    parent = [0] * n
    for t in range(masks.shape[0]):
        _union_pass(n, eu, ev, masks[t], parent)
        remap = {}
        row = []
        for i in range(n):
            r = _find(parent, i)
            if r not in remap:
                remap[r] = len(remap)
            row.append(remap[r])
        out[t] = row
    return out


def connected_batch(n, eu, ev, masks):
    eu = np.asarray(eu).tolist()
    ev = np.asarray(ev).tolist()
    masks = np.asarray(masks)
    parent = [0] * max(n, 1)
    return np.array(
        [_union_pass(n, eu, ev, masks[t], parent) <= 1 for t in range(masks.shape[0])],
        dtype=np.uint8,
    )


def sliding_union_connected(n, eu, ev, masks, B):
    masks = np.asarray(masks)
    K = masks.shape[0]
    if K - B <= 0:
        return np.zeros(0, dtype=np.uint8)
    csum = np.zeros((K + 1, masks.shape[1]), dtype=np.int64)
    np.cumsum(masks, axis=0, out=csum[1:])
    unions = (csum[B + 1:] - csum[: K - B]) > 0
    return connected_batch(n, eu, ev, unions.astype(np.uint8))


def jacobi_eigenvalues(A, rel_tol, max_sweeps):
    n = A.shape[0]
    thresh = rel_tol * rel_tol * float(np.sum(A * A))
    sweep = 0
    while sweep < max_sweeps:
        off = float(np.sum(np.triu(A, 1) ** 2)) * 2.0
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
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q]
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :]
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
    return np.sort(np.diag(A).copy()), sweep


def _rhalf(t):
    return np.sign(t) * np.floor(np.abs(t) + 0.5)


def apply_map(code, p1, p2, z):
    """Vectorised node/link map shared with :class:`~lossyalloc.objectives.NonlinearMap`."""
    z = np.asarray(z, dtype=np.float64)
    if code == IDENTITY:
        return z.copy()
    if code == CUBIC:
        return z + z * z * z
    az = np.abs(z)
    nz = az > 0
    safe = np.where(nz, az, 1.0)
    if code == SIGNUM_POWER:
        mag = safe ** p1 + safe ** p2
    elif code == LOG_QUANTIZER:
        mag = np.exp(p1 * _rhalf(np.log(safe) / p1))
    elif code == UNIFORM_QUANTIZER:
        mag = p1 * np.floor(safe / p1 + 0.5)
    else:
        raise ValueError(f"unknown map code {code}")
    return np.where(nz, np.sign(z) * mag, 0.0)


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(t):
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def objective_terms(x, kind, a, c, l, d, lo, hi, gamma, has_box):
    """Per-node cost values and gradients."""
    r = x - c
    val = 0.5 * a * r * r
    grad = a * r
    lx = kind == 1
    if lx.any():
        arg = l * (x - d)
        val = val + np.where(lx, softplus(arg), 0.0)
        grad = grad + np.where(lx, l * sigmoid(arg), 0.0)
    hb = has_box.astype(bool)
    if hb.any():
        above = np.where(hb, np.maximum(x - hi, 0.0), 0.0)
        below = np.where(hb, np.maximum(lo - x, 0.0), 0.0)
        val = val + gamma * (above * above + below * below)
        grad = grad + 2.0 * gamma * (above - below)
    return val, grad


def run_block(x, eu, ev, w, masks, kind, a, c, l, d, lo, hi, gamma, has_box,
              gn_code, gn_p1, gn_p2, gl_code, gl_p1, gl_p2,
              eta, disp_tol, n_update, out_F, out_sum, out_count, out_disp, out_x):
    keep_x = out_x.shape[0] > 0
    T = masks.shape[0]
    for t in range(T):
        val, grad = objective_terms(x, kind, a, c, l, d, lo, hi, gamma, has_box)
        disp = float(np.linalg.norm(grad - grad.mean()))
        m = masks[t].astype(bool)
        out_F[t] = float(np.sum(val))
        out_sum[t] = float(np.sum(x))
        out_count[t] = int(m.sum())
        out_disp[t] = disp
        if keep_x:
            out_x[t] = x
        if disp < disp_tol:
            return t + 1, True
        if t >= n_update:
            continue
        q = apply_map(gl_code, gl_p1, gl_p2, grad)
        u, v = eu[m], ev[m]
        flow = eta * w[m] * apply_map(gn_code, gn_p1, gn_p2, q[u] - q[v])
        np.subtract.at(x, u, flow)
        np.add.at(x, v, flow)
    return T, False
