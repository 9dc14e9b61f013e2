"""Sum-preserving gradient-tracking update, step-size bound and KKT oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import WeightedGraph, spectral_bounds
from .objectives import LocalObjective, NonlinearMap, ObjectiveArrays, curvature_bound, sector_bounds

__all__ = [
    "AllocationState",
    "ContractViolation",
    "KktSolution",
    "OracleError",
    "dispersion",
    "feasible_init",
    "kkt_oracle",
    "laplacian_identity_check",
    "quantization_neighborhood",
    "step_bound",
    "suggest_step_size",
    "update_step",
]


class ContractViolation(ValueError):
    """The active link set would break sum preservation."""


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class AllocationState:
    x: np.ndarray
    k: int = 0
    b: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if self.b is None:
            object.__setattr__(self, "b", math.fsum(self.x))

    def feasibility_gap(self) -> float:
        return abs(math.fsum(self.x) - self.b)


@dataclass(frozen=True)
class KktSolution:
    x_star: np.ndarray
    phi_star: float
    residual: float
    sum_error: float


def _edge_view(active) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(active, WeightedGraph):
        return active.edge_arrays
    W = np.asarray(active, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ContractViolation(f"weight matrix must be square, got shape {W.shape}")
    if not np.array_equal(W, W.T):
        i, j = np.argwhere(W != W.T)[0]
        raise ContractViolation(
            f"asymmetric link weights W[{i},{j}]={W[i, j]} vs W[{j},{i}]={W[j, i]}; "
            "sum preservation requires symmetric drops"
        )
    if np.any(np.diag(W) != 0):
        raise ContractViolation("self-loops are not allowed in the active graph")
    u, v = np.nonzero(np.triu(W, 1))
    return u.astype(np.int64), v.astype(np.int64), W[u, v]


def update_step(state: AllocationState, active, objs: Sequence[LocalObjective] | ObjectiveArrays,
                g_n: NonlinearMap, g_l: NonlinearMap, eta: float) -> AllocationState:
    """One synchronous update of every node over the active links.

    ``x_i <- x_i - eta * sum_j W_ij g_n(g_l(f_i'(x_i)) - g_l(f_j'(x_j)))``.
    Each link's flow is computed once and applied with opposite signs at its
    endpoints, so the resource sum is unchanged up to rounding.
    """
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    arr = objs if isinstance(objs, ObjectiveArrays) else ObjectiveArrays.stack(objs)
    u, v, w = _edge_view(active)
    x = state.x.copy()
    grad = arr.gradients(x)
    q = g_l(grad)
    flow = eta * w * g_n(q[u] - q[v])
    # sequential per-edge application, same order as the compiled kernel
    for e in range(u.size):
        x[u[e]] -= flow[e]
        x[v[e]] += flow[e]
    return AllocationState(x, state.k + 1, state.b)


def step_bound(kappa_n: float, kappa_l: float, K_n: float, K_l: float, u: float,
               lambda2: float, lambdaN: float, B: int = 0) -> float:
    """Largest admissible step size for B-connected switching topologies.

    Returns ``kappa_n kappa_l lambda2 / (u lambdaN^2 K_n^2 K_l^2) / (B + 1)``.
    """
    vals = dict(kappa_n=kappa_n, kappa_l=kappa_l, K_n=K_n, K_l=K_l, u=u, lambda2=lambda2, lambdaN=lambdaN)
    bad = {k: v for k, v in vals.items() if not v > 0}
    if bad:
        raise ValueError(f"step bound needs positive inputs, got {bad}")
    if B < 0:
        raise ValueError(f"window B must be non-negative, got {B}")
    eta_bar = kappa_n * kappa_l * lambda2 / (u * lambdaN**2 * K_n**2 * K_l**2)
    return eta_bar / (B + 1)


def suggest_step_size(graph: WeightedGraph, objs: Sequence[LocalObjective], g_n: NonlinearMap,
                      g_l: NonlinearMap, region: tuple[float, float], B: int = 0, factor: float = 0.9) -> float:
    """``factor`` times :func:`step_bound` with constants measured on ``region``.

    Sector bounds of ``g_l`` are taken over the largest gradient magnitude on
    ``region``, those of ``g_n`` over twice the largest quantized gradient,
    and the curvature bound over ``region`` itself. The result is only as
    valid as the assumption that the states stay inside ``region``.
    """
    if not 0 < factor:
        raise ValueError("factor must be positive")
    lo, hi = map(float, region)
    arr = ObjectiveArrays.stack(objs)
    grid = np.linspace(lo, hi, 2001)
    tiled = ObjectiveArrays(*(np.repeat(col, grid.size) for col in arr.columns()))
    Z_l = float(np.max(np.abs(tiled.gradients(np.tile(grid, arr.a.size)))))
    kappa_l, K_l = sector_bounds(g_l, max(Z_l, 1e-12))
    kappa_n, K_n = sector_bounds(g_n, max(2 * K_l * Z_l, 1e-12))
    u = curvature_bound(objs, lo, hi)
    sb = spectral_bounds(graph)
    return factor * step_bound(kappa_n, kappa_l, K_n, K_l, u, sb.lambda2, sb.lambdaN, B)


def feasible_init(n: int, b: float, boxes, seed) -> np.ndarray:
    """Random ``x(0)`` inside the boxes with ``sum(x) = b``.

    Components are drawn in a random order, each uniformly from the range
    that keeps the remainder feasible; the last one takes the remainder.
    """
    boxes = np.broadcast_to(np.asarray(boxes, dtype=float), (n, 2))
    lo, hi = boxes[:, 0], boxes[:, 1]
    if np.any(lo > hi):
        raise ValueError("every box needs m_i <= M_i")
    if lo.sum() > b or hi.sum() < b:
        raise ValueError(f"infeasible demand: need sum(m)={lo.sum()} <= b={b} <= sum(M)={hi.sum()}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    x = np.empty(n)
    remaining = float(b)
    lo_tail = math.fsum(lo)
    hi_tail = math.fsum(hi)
    for pos, i in enumerate(order):
        lo_tail -= lo[i]
        hi_tail -= hi[i]
        if pos == n - 1:
            x[i] = min(max(b - math.fsum(x[order[:-1]]), lo[i]), hi[i])
            break
        low = max(lo[i], remaining - hi_tail)
        high = min(hi[i], remaining - lo_tail)
        x[i] = low + (high - low) * rng.random()
        remaining -= x[i]
    return x


def _invert_gradients(arr: ObjectiveArrays, phi: float, lo: np.ndarray, hi: np.ndarray, iters: int = 200):
    """Vectorised bisection for ``f_i'(x_i) = phi`` on brackets ``[lo, hi]``."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        above = arr.gradients(mid) > phi
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def kkt_oracle(objs: Sequence[LocalObjective], b: float, tol: float = 1e-12, *,
               x_range: tuple[float, float] | None = None, max_expand: int = 60) -> KktSolution:
    """Centralised solution of ``min sum f_i(x_i)`` s.t. ``sum x_i = b``.

    Bisection on the common marginal cost ``phi``; each node's ``x_i(phi)``
    solves ``f_i'(x_i) = phi`` by an inner bisection.
    """
    arr = ObjectiveArrays.stack(objs)
    n = len(objs)
    if n == 0:
        raise ValueError("no objectives")
    if x_range is None:
        centre = float(b) / n
        spread = max(1.0, float(np.max(np.abs(arr.c - centre))), float(np.max(np.abs(arr.d - centre))))
        x_range = (centre - 2 * spread, centre + 2 * spread)
    lo_x, hi_x = map(float, x_range)
    for _ in range(max_expand):
        if n * lo_x < b < n * hi_x:
            sol = _solve_bracketed(arr, b, tol, lo_x, hi_x)
            if sol is not None:
                return sol
        width = hi_x - lo_x
        lo_x -= width
        hi_x += width
    raise OracleError(f"could not bracket b={b}: x range grew to [{lo_x}, {hi_x}]")


def _solve_bracketed(arr, b, tol, lo_x, hi_x):
    n = arr.a.size
    xl = np.full(n, lo_x)
    xh = np.full(n, hi_x)
    phi_lo = float(np.min(arr.gradients(xl)))
    phi_hi = float(np.max(arr.gradients(xh)))

    def total(phi):
        x = _invert_gradients(arr, phi, xl, xh)
        return x, math.fsum(x) - b

    x, s = total(phi_lo)
    phi = phi_lo
    for _ in range(400):
        phi = 0.5 * (phi_lo + phi_hi)
        x, s = total(phi)
        if abs(s) <= tol or phi in (phi_lo, phi_hi):
            break
        if s > 0:
            phi_hi = phi
        else:
            phi_lo = phi
    edge = 1e-9 * (hi_x - lo_x)
    if np.any(x <= lo_x + edge) or np.any(x >= hi_x - edge):
        return None  # some x_i(phi*) sits on the bracket: widen and retry
    residual = float(np.max(np.abs(arr.gradients(x) - phi)))
    return KktSolution(x, float(phi), residual, abs(s))


def dispersion(gradients) -> float:
    """Norm of the mean-removed gradient vector; zero iff all entries agree."""
    g = np.asarray(gradients, dtype=float)
    if g.size == 0:
        raise ValueError("dispersion of an empty vector")
    return float(np.linalg.norm(g - g.mean()))


def laplacian_identity_check(W, z, g_n: NonlinearMap, g_l: NonlinearMap) -> tuple[float, float]:
    """Both sides of the weighted-Laplacian sum identity behind sum preservation.

    ``lhs = sum_i z_i sum_j W_ij g_n(g_l(z_j) - g_l(z_i))`` and
    ``rhs = -1/2 sum_ij W_ij (z_j - z_i) g_n(g_l(z_j) - g_l(z_i))``.
    """
    W = np.asarray(W, dtype=float)
    z = np.asarray(z, dtype=float)
    if not np.array_equal(W, W.T):
        raise ContractViolation("identity requires a symmetric weight matrix")
    q = g_l(z)
    G = g_n(q[None, :] - q[:, None])  # G[i, j] = g_n(g_l(z_j) - g_l(z_i))
    lhs = math.fsum((z[:, None] * W * G).ravel())
    rhs = -0.5 * math.fsum((W * (z[None, :] - z[:, None]) * G).ravel())
    return lhs, rhs


def quantization_neighborhood(rho: float, phi_star: float, min_curvature: float) -> float:
    """Sup-norm radius around ``x*`` reachable by log-quantized link messages.

    At rest all quantized gradients coincide, so every gradient and ``phi*``
    share one quantizer cell of relative width ``2 sinh(rho/2)``.
    """
    if not (rho > 0 and min_curvature > 0):
        raise ValueError("rho and min_curvature must be positive")
    return 2.0 * math.exp(rho / 2) * math.sinh(rho / 2) * abs(phi_star) / min_curvature

