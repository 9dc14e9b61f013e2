"""Bond-percolation thresholds and drop-rate window sizing.

Analytic thresholds follow the usual bond-occupation convention: ``p_c`` is
the fraction of retained links at which a giant cluster appears. The window
sizing compares the per-window link loss probability against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._backend import kernels
from .graph import MODEL_ALIASES, MODEL_KINDS, GraphModelSpec, WeightedGraph, generate, mean_degree

__all__ = [
    "DropRateSpec",
    "PercolationResult",
    "admissible_drop_range",
    "bond_threshold",
    "conservative_window",
    "drop_to_removal_rate",
    "estimate_threshold_mc",
    "hurwitz_zeta",
    "min_window_B",
    "window_for_removal_rate",
]

# B_2k / (2k)! for k = 1..10
_BERNOULLI = (
    1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66,
    -691 / 2730, 7 / 6, -3617 / 510, 43867 / 798, -174611 / 330,
)
_EM_COEF = tuple(b / math.factorial(2 * k) for k, b in enumerate(_BERNOULLI, start=1))

DIVERGENT_SF = "divergent denominator, threshold is 0"
CLAMPED = "raw formula exceeds 1, clamped"


def _probability(p, name="probability"):
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class DropRateSpec:
    """Per-direction packet drop probability, homogeneous or per link."""

    p_d: float | None = None
    per_link: Mapping[object, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.p_d is not None:
            _probability(self.p_d, "p_d")
        for key, p in self.per_link.items():
            _probability(p, f"drop rate of link {key}")

    def max_rate(self) -> float:
        rates = list(self.per_link.values())
        if self.p_d is not None:
            rates.append(self.p_d)
        if not rates:
            raise ValueError("drop-rate spec holds no rates")
        return max(rates)


@dataclass(frozen=True)
class PercolationResult:
    p_c: float
    method: str
    model: str
    uncertainty: float = 0.0
    flag: str | None = None
    curve: tuple = ()

    def csv_row(self, param_summary: str = "") -> str:
        return f"{self.model},{param_summary},{self.p_c!r},{self.method},{self.uncertainty!r}"


CSV_HEADER = "model,param_summary,p_c,method,uncertainty"


def drop_to_removal_rate(p_d: float) -> float:
    """Probability a link is unusable when either direction may drop: ``2p - p^2``."""
    p_d = _probability(p_d, "p_d")
    return 2.0 * p_d - p_d * p_d


def hurwitz_zeta(s: float, a: float, terms: int = 12) -> float:
    """``sum_{k>=0} (k + a)^-s`` for ``s > 1``, ``a > 0``.

    Direct summation of the first ``N`` terms, then the Euler-Maclaurin tail
    with ten Bernoulli corrections.
    """
    if not s > 1:
        raise ValueError(f"Hurwitz zeta diverges for s <= 1 (s={s})")
    if not a > 0:
        raise ValueError(f"Hurwitz zeta needs a > 0 (a={a})")
    # enough direct terms that the asymptotic tail is far inside its radius
    N = max(terms, int(math.ceil(s)) + 10)
    head = math.fsum((k + a) ** -s for k in range(N))
    x = N + a
    tail = [x ** (1 - s) / (s - 1), 0.5 * x ** -s]
    rising = s  # s (s+1) ... (s + 2k - 2)
    for k, coef in enumerate(_EM_COEF, start=1):
        tail.append(coef * rising * x ** (-s - 2 * k + 1))
        rising *= (s + 2 * k - 1) * (s + 2 * k)
    return head + math.fsum(tail)


def bond_threshold(model: GraphModelSpec | str, *, graph: WeightedGraph | None = None,
                   mean_degree_value: float | None = None, **params) -> PercolationResult:
    """Analytic bond-percolation threshold of a model family.

    ``model`` is a :class:`GraphModelSpec` or a kind name with parameters as
    keywords (``theta`` for small-world, ``sigma``/``min_degree`` for
    scale-free). For Erdos-Renyi the mean degree comes from, in order,
    ``mean_degree_value``, a concrete ``graph``, or the ensemble ``p (n-1)``.
    """
    if isinstance(model, GraphModelSpec):
        kind, params = model.kind, {**model.params, **params}
    else:
        kind = _canonical(model)
    if kind == "square-grid":
        return PercolationResult(0.5, "analytic", kind)
    if kind == "erdos-renyi":
        if mean_degree_value is not None:
            k = float(mean_degree_value)
        elif graph is not None:
            k = mean_degree(graph)
        elif "n" in params and "p" in params:
            k = params["p"] * (params["n"] - 1)
        else:
            raise ValueError("Erdos-Renyi threshold needs a mean degree, a graph, or n and p")
        if not k > 0:
            raise ValueError(f"mean degree must be positive, got {k}")
        return _clamped(1.0 / k, kind)
    if kind == "small-world":
        if params.get("m", 1) != 1:
            raise ValueError("the closed-form small-world threshold covers m = 1 only")
        theta = _probability(params["theta"], "theta")
        # rationalised form of (-2t - 1 + sqrt(4t^2 + 12t + 1)) / (4t); finite at t = 0
        return PercolationResult(2.0 / (math.sqrt(4 * theta**2 + 12 * theta + 1) + 2 * theta + 1), "analytic", kind)
    if kind == "scale-free":
        sigma, nmin = float(params["sigma"]), float(params["min_degree"])
        if sigma <= 3:
            return PercolationResult(0.0, "analytic", kind, flag=DIVERGENT_SF)
        z1 = hurwitz_zeta(sigma - 1, nmin)
        z2 = hurwitz_zeta(sigma - 2, nmin)
        return _clamped(z1 / (z2 - z1), kind)
    raise ValueError(f"no analytic threshold for model {kind!r}")


def _canonical(kind):
    kind = MODEL_ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown graph model {kind!r}")
    return kind


def _clamped(raw, kind):
    if raw > 1:
        return PercolationResult(1.0, "analytic", kind, flag=CLAMPED)
    return PercolationResult(raw, "analytic", kind)


def window_for_removal_rate(p_l: float, p_c: float) -> int:
    """Minimal ``B >= 0`` with ``p_l ** (B + 1) < p_c``."""
    p_l = _probability(p_l, "p_l")
    if not 0 < p_c <= 1:
        raise ValueError(f"threshold p_c must lie in (0, 1], got {p_c}")
    if p_l >= 1:
        raise ValueError("links are always lost (p_l = 1): no finite window exists")
    if p_l < p_c:
        return 0
    B = max(0, int(math.ceil(math.log(p_c) / math.log(p_l))) - 1)
    # the log estimate can be off by one either way near ties
    while B > 0 and p_l ** B < p_c:
        B -= 1
    while not p_l ** (B + 1) < p_c:
        B += 1
    return B


def min_window_B(p_d: float, p_c: float) -> int:
    """Smallest window length ``B`` with ``(2p_d - p_d^2)^(B+1) < p_c``.

    Zero when ``p_d < 1 - sqrt(1 - p_c)``: every single iteration keeps the
    network above threshold.
    """
    p_d = _probability(p_d, "p_d")
    if p_d >= 1:
        raise ValueError("p_d = 1 drops every packet: no finite window exists")
    return window_for_removal_rate(drop_to_removal_rate(p_d), p_c)


def admissible_drop_range(p_c: float) -> tuple[float, float]:
    """Drop rates in ``(lower, 1)`` need windowing; below ``lower`` none is needed."""
    if not 0 < p_c <= 1:
        raise ValueError(f"threshold p_c must lie in (0, 1], got {p_c}")
    return 1.0 - math.sqrt(1.0 - p_c), 1.0


def conservative_window(rates: DropRateSpec | Mapping[object, float] | Sequence[float], p_c: float) -> int:
    """Window for heterogeneous, time-varying rates, sized by the worst link."""
    if isinstance(rates, DropRateSpec):
        worst = rates.max_rate()
    else:
        values = list(rates.values()) if isinstance(rates, Mapping) else list(rates)
        if not values:
            raise ValueError("empty drop-rate map")
        worst = max(_probability(p) for p in values)
    return min_window_B(worst, p_c)


def estimate_threshold_mc(model: GraphModelSpec, trials: int, grid_step: float, seed,
                          criterion: str = "giant") -> PercolationResult:
    """Monte-Carlo bond-percolation threshold.

    For each trial a fresh graph is drawn from ``model`` and every link gets
    one uniform variate, so the retained sets for different occupation
    probabilities ``q = step, 2 step, ...`` are nested. The event per sample is

    * ``"giant"``: a cluster spans the lattice top to bottom (square grid) or
      holds at least half the nodes (other models);
    * ``"connected"``: all nodes are mutually reachable.

    The estimate is the smallest ``q`` at which the event rate reaches 0.5,
    in the same occupation convention as :func:`bond_threshold`. The
    uncertainty is the worst-case 95% binomial half-width of the rate,
    ``1.96 * 0.5 / sqrt(trials)``, floored at half a grid step.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 < grid_step < 1:
        raise ValueError(f"grid_step must lie in (0, 1), got {grid_step}")
    if criterion not in ("giant", "connected"):
        raise ValueError(f"unknown percolation criterion {criterion!r}")
    qs = np.arange(1, int(math.floor(1 / grid_step + 1e-9)) + 1) * grid_step
    qs = qs[qs <= 1 + 1e-12]
    base_seq = np.random.SeedSequence(seed)
    hits = np.zeros(qs.size)
    rows = cols = None
    if model.kind == "square-grid":
        rows, cols = int(model.params["rows"]), int(model.params["cols"])
    for child in base_seq.spawn(trials):
        graph_seed, link_seed = child.spawn(2)
        g = generate(model.with_seed(graph_seed))
        u, v, _ = g.edge_arrays
        draws = np.random.default_rng(link_seed).random(g.n_edges)
        masks = np.ascontiguousarray((draws[None, :] < qs[:, None]).astype(np.uint8))
        if criterion == "connected":
            hits += kernels.connected_batch(g.n, u, v, masks)
            continue
        labels = kernels.component_labels_batch(g.n, u, v, masks)
        for r, lab in enumerate(labels):
            if rows is not None:
                hits[r] += bool(np.intersect1d(lab[:cols], lab[-cols:]).size)
            else:
                hits[r] += np.bincount(lab).max() * 2 >= g.n
    rate = hits / trials
    above = np.flatnonzero(rate >= 0.5)
    p_c = float(qs[above[0]]) if above.size else 1.0
    half_width = max(grid_step / 2, 1.96 * 0.5 / math.sqrt(trials))
    return PercolationResult(
        p_c, "monte-carlo", model.kind, half_width,
        curve=tuple(zip(qs.tolist(), rate.tolist())),
    )
