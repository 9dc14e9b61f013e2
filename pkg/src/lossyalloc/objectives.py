"""Local cost functions and the odd, sign-preserving node/link maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _fallback as _ref

__all__ = [
    "LocalObjective",
    "NonlinearMap",
    "ObjectiveArrays",
    "SectorViolation",
    "curvature_bound",
    "map_eval",
    "objective_eval",
    "random_objectives",
    "sector_bounds",
]

MAP_CODES = {
    "identity": _ref.IDENTITY,
    "cubic": _ref.CUBIC,
    "signum-power": _ref.SIGNUM_POWER,
    "log-quantizer": _ref.LOG_QUANTIZER,
    "uniform-quantizer": _ref.UNIFORM_QUANTIZER,
}


class SectorViolation(ValueError):
    """A map fails strong sign preservation at a sampled argument."""

    def __init__(self, z):
        super().__init__(f"map is not strongly sign-preserving at z={z!r}")
        self.z = z


@dataclass(frozen=True)
class NonlinearMap:
    """Odd scalar map applied to link messages (``g_l``) or differences (``g_n``).

    ``kind`` is one of ``identity``, ``cubic`` (z + z**3), ``signum-power``
    (needs ``v1``, ``v2``), ``log-quantizer`` or ``uniform-quantizer`` (need
    ``rho``). Quantizers round half away from zero and send 0 to 0.
    """

    kind: str = "identity"
    rho: float | None = None
    v1: float | None = None
    v2: float | None = None

    def __post_init__(self):
        if self.kind not in MAP_CODES:
            raise ValueError(f"unknown map kind {self.kind!r}; expected one of {sorted(MAP_CODES)}")
        if self.kind in ("log-quantizer", "uniform-quantizer"):
            if self.rho is None or not self.rho > 0:
                raise ValueError(f"{self.kind} needs a positive rho")
        if self.kind == "signum-power":
            if self.v1 is None or self.v2 is None or not (self.v1 > 0 and self.v2 > 0):
                raise ValueError("signum-power needs positive exponents v1 and v2")

    @property
    def code(self) -> int:
        return MAP_CODES[self.kind]

    @property
    def params(self) -> tuple[float, float]:
        if self.kind == "signum-power":
            return float(self.v1), float(self.v2)
        if self.rho is not None:
            return float(self.rho), 0.0
        return 0.0, 0.0

    def __call__(self, z):
        out = _ref.apply_map(self.code, *self.params, z)
        return float(out) if np.ndim(out) == 0 else out


def map_eval(g: NonlinearMap, z: float) -> float:
    return g(z)


def sector_bounds(g: NonlinearMap, Z: float, samples: int = 4001) -> tuple[float, float]:
    """Bounds ``(kappa, K)`` with ``kappa <= g(z)/z <= K`` for ``0 < |z| <= Z``.

    Closed forms for identity, cubic and the log quantizer; otherwise the
    extremes of ``g(z)/z`` over a log-spaced sample of ``(0, Z]``.
    """
    if not Z > 0:
        raise ValueError(f"domain bound Z must be positive, got {Z}")
    if g.kind == "identity":
        return 1.0, 1.0
    if g.kind == "cubic":
        return 1.0, 1.0 + Z * Z
    if g.kind == "log-quantizer":
        return math.exp(-g.rho / 2), math.exp(g.rho / 2)
    z = Z * np.logspace(-8, 0, samples)
    z = np.concatenate([z, -z])
    gz = _ref.apply_map(g.code, *g.params, z)
    bad = np.flatnonzero(gz * z <= 0)
    if bad.size:
        raise SectorViolation(float(z[bad[0]]))
    ratio = gz / z
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True)
class LocalObjective:
    """One node's cost.

    ``quadratic``: ``a/2 (x - c)**2``. ``quad-logexp`` adds
    ``log(1 + exp(l (x - d)))``. With a ``box = (m, M)`` the soft penalty
    ``gamma * (max(x - M, 0)**2 + max(m - x, 0)**2)`` is added.
    """

    a: float
    c: float = 0.0
    kind: str = "quadratic"
    l: float = 0.0
    d: float = 0.0
    box: tuple[float, float] | None = None
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "quad-logexp"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not self.a > 0:
            raise ValueError(f"curvature a must be positive for strict convexity, got {self.a}")
        if self.gamma < 0:
            raise ValueError("penalty weight gamma must be non-negative")
        if self.box is not None:
            m, M = self.box
            if m > M:
                raise ValueError(f"empty box [{m}, {M}]")
            object.__setattr__(self, "box", (float(m), float(M)))

    def value(self, x):
        return objective_eval(self, x)[0]

    def gradient(self, x):
        return objective_eval(self, x)[1]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        h = np.full_like(x, self.a)
        if self.kind == "quad-logexp":
            s = _ref.sigmoid(self.l * (x - self.d))
            h = h + self.l**2 * s * (1 - s)
        if self.box is not None:
            m, M = self.box
            h = h + 2 * self.gamma * ((x > M) | (x < m))
        return h


def objective_eval(f: LocalObjective, x):
    """``(value, gradient)`` of ``f`` at ``x`` (scalar or array)."""
    arr = ObjectiveArrays.stack([f])
    xv = np.asarray(x, dtype=float)
    flat = xv.reshape(-1)
    val, grad = _ref.objective_terms(flat, *arr.columns())
    if xv.ndim == 0:
        return float(val[0]), float(grad[0])
    return val.reshape(xv.shape), grad.reshape(xv.shape)


@dataclass
class ObjectiveArrays:
    """Column layout of a list of objectives, as consumed by the kernels."""

    kind: np.ndarray
    a: np.ndarray
    c: np.ndarray
    l: np.ndarray
    d: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    gamma: np.ndarray
    has_box: np.ndarray

    @classmethod
    def stack(cls, objs: Sequence[LocalObjective]) -> "ObjectiveArrays":
        def col(fn, dtype=np.float64):
            return np.ascontiguousarray([fn(f) for f in objs], dtype=dtype)

        return cls(
            kind=col(lambda f: 1 if f.kind == "quad-logexp" else 0, np.int64),
            a=col(lambda f: f.a),
            c=col(lambda f: f.c),
            l=col(lambda f: f.l if f.kind == "quad-logexp" else 0.0),
            d=col(lambda f: f.d),
            lo=col(lambda f: f.box[0] if f.box else -np.inf),
            hi=col(lambda f: f.box[1] if f.box else np.inf),
            gamma=col(lambda f: f.gamma if f.box else 0.0),
            has_box=col(lambda f: f.box is not None, np.uint8),
        )

    def columns(self):
        return (self.kind, self.a, self.c, self.l, self.d, self.lo, self.hi, self.gamma, self.has_box)

    def evaluate(self, x):
        """Per-node ``(values, gradients)`` at the state vector ``x``."""
        return _ref.objective_terms(np.asarray(x, dtype=float), *self.columns())

    def total(self, x) -> float:
        return float(np.sum(self.evaluate(x)[0]))

    def gradients(self, x) -> np.ndarray:
        return self.evaluate(x)[1]


def curvature_bound(objs: Sequence[LocalObjective], lo: float, hi: float, points: int = 2001) -> float:
    """Smallest ``u`` with ``f_i'' < 2u`` on ``[lo, hi]``, checked on a grid.

    The returned value carries a relative margin of 1e-9 so the inequality
    is strict.
    """
    grid = np.linspace(lo, hi, points)
    # the logistic curvature peaks at x = d, possibly between grid points
    peak = max(float(np.max(f.hessian(np.append(grid, np.clip(f.d, lo, hi))))) for f in objs)
    return 0.5 * peak * (1 + 1e-9)


@dataclass(frozen=True)
class ParameterRanges:
    """Uniform ranges for randomly drawn cost parameters."""

    a: tuple[float, float] = (0.5, 1.5)
    c: tuple[float, float] = (2.0, 7.0)
    l: tuple[float, float] = (0.0, 0.5)
    d: tuple[float, float] = (2.0, 7.0)


def random_objectives(n: int, rng, *, kind: str = "quad-logexp", ranges: ParameterRanges | None = None,
                      box: tuple[float, float] | None = None, gamma: float = 1.0) -> list[LocalObjective]:
    rng = np.random.default_rng(rng)
    r = ranges or ParameterRanges()
    a = rng.uniform(*r.a, size=n)
    c = rng.uniform(*r.c, size=n)
    l = rng.uniform(*r.l, size=n)
    d = rng.uniform(*r.d, size=n)
    return [
        LocalObjective(a=float(a[i]), c=float(c[i]), kind=kind, l=float(l[i]) if kind == "quad-logexp" else 0.0,
                       d=float(d[i]) if kind == "quad-logexp" else 0.0, box=box, gamma=gamma)
        for i in range(n)
    ]
