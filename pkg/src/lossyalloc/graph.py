"""Weighted undirected graphs, random ensembles and Laplacian spectra.

Nodes are indexed ``0 .. n-1`` in memory; the edge-list text format uses
1-based indices.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._backend import kernels

__all__ = [
    "DisconnectedGraphError",
    "GraphModelSpec",
    "SpectralSummary",
    "WeightedGraph",
    "assign_weights",
    "diameter",
    "generate",
    "is_connected",
    "laplacian",
    "laplacian_eigenvalues",
    "mean_degree",
    "read_edge_list",
    "spectral_bounds",
    "union_graph",
    "write_edge_list",
]

MODEL_KINDS = ("erdos-renyi", "small-world", "scale-free", "square-grid")
MODEL_ALIASES = {
    "er": "erdos-renyi",
    "sw": "small-world",
    "sf": "scale-free",
    "grid": "square-grid",
}


class DisconnectedGraphError(ValueError):
    """Raised when a spectral quantity needs a connected graph."""


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with symmetric, strictly positive link weights.

    ``weights`` maps an unordered pair ``(i, j)`` with ``i < j`` to ``W_ij``;
    absent pairs have weight zero.
    """

    n: int
    weights: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"node count must be non-negative, got {self.n}")
        clean = {}
        for (i, j), w in self.weights.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            w = float(w)
            if not w > 0 or not math.isfinite(w):
                raise ValueError(f"edge ({i}, {j}) has non-positive weight {w}")
            key = _edge_key(i, j)
            if key in clean and clean[key] != w:
                raise ValueError(f"edge {key} given twice with different weights")
            clean[key] = w
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], weight: float = 1.0):
        return cls(n, {_edge_key(i, j): weight for i, j in edges})

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(self.weights)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(u, v, w)`` arrays in sorted edge order, as the kernels expect."""
        m = len(self.weights)
        u = np.fromiter((e[0] for e in self.weights), dtype=np.int64, count=m)
        v = np.fromiter((e[1] for e in self.weights), dtype=np.int64, count=m)
        w = np.fromiter(self.weights.values(), dtype=np.float64, count=m)
        return u, v, w

    def has_edge(self, i: int, j: int) -> bool:
        return _edge_key(i, j) in self.weights

    def weight(self, i: int, j: int) -> float:
        return self.weights.get(_edge_key(i, j), 0.0)

    def neighbors(self, i: int) -> list[int]:
        return sorted(b if a == i else a for (a, b) in self.weights if i in (a, b))

    def adjacency(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        u, v, w = self.edge_arrays
        W[u, v] = w
        W[v, u] = w
        return W

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        u, v, _ = self.edge_arrays
        np.add.at(deg, u, 1)
        np.add.at(deg, v, 1)
        return deg

    def subgraph(self, mask: Sequence[bool]) -> "WeightedGraph":
        """Keep the edges whose position in :attr:`edges` is set in ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_edges,):
            raise ValueError(f"mask length {mask.shape} does not match {self.n_edges} edges")
        return WeightedGraph(
            self.n, {e: w for (e, w), keep in zip(self.weights.items(), mask) if keep}
        )

    def with_weights(self, weights: Mapping[tuple[int, int], float]) -> "WeightedGraph":
        return WeightedGraph(self.n, weights)


@dataclass(frozen=True)
class SpectralSummary:
    lambda2: float
    lambdaN: float

    @property
    def ratio(self) -> float:
        """``lambda2 / lambdaN**2``, the spectral factor of the step-size bound."""
        return self.lambda2 / self.lambdaN**2


@dataclass(frozen=True)
class GraphModelSpec:
    """A random-graph ensemble and its parameters.

    Recognised parameters per ``kind``:

    * ``erdos-renyi``: ``n``, ``p``
    * ``small-world``: ``n``, ``m`` (ring neighbours per side), ``theta``
    * ``scale-free``: ``n``, ``sigma``, ``min_degree``
    * ``square-grid``: ``rows``, ``cols``
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        kind = MODEL_ALIASES.get(self.kind, self.kind)
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown graph model {self.kind!r}; expected one of {MODEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        required = {
            "erdos-renyi": ("n", "p"),
            "small-world": ("n", "m", "theta"),
            "scale-free": ("n", "sigma", "min_degree"),
            "square-grid": ("rows", "cols"),
        }[kind]
        missing = [k for k in required if k not in p]
        if missing:
            raise ValueError(f"{kind} model is missing parameters {missing}")
        extra = sorted(set(p) - set(required))
        if extra:
            raise ValueError(f"{kind} model does not take parameters {extra}")
        if kind == "erdos-renyi":
            _check(p["n"] >= 1, "n must be >= 1")
            _check(0 <= p["p"] <= 1, "link probability p must lie in [0, 1]")
        elif kind == "small-world":
            _check(p["m"] >= 1, "neighbour count m must be >= 1")
            _check(p["n"] >= 2 * p["m"] + 1, "small-world needs n >= 2m + 1")
            _check(0 <= p["theta"] <= 1, "shortcut probability theta must lie in [0, 1]")
        elif kind == "scale-free":
            _check(p["sigma"] > 2, "power-law exponent sigma must be > 2")
            _check(p["min_degree"] >= 1, "min_degree must be >= 1")
            _check(p["n"] >= p["min_degree"] + 1, "scale-free needs n > min_degree")
        else:
            _check(p["rows"] >= 1 and p["cols"] >= 1, "rows and cols must be positive")
            _check(p["rows"] * p["cols"] >= 2, "grid needs at least 2 nodes")

    @property
    def n(self) -> int:
        if self.kind == "square-grid":
            return int(self.params["rows"]) * int(self.params["cols"])
        return int(self.params["n"])

    def with_seed(self, seed) -> "GraphModelSpec":
        return GraphModelSpec(self.kind, self.params, seed)

    def summary(self) -> str:
        return ";".join(f"{k}={_fmt(v)}" for k, v in self.params.items())


def _fmt(v):
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def _check(ok, msg):
    if not ok:
        raise ValueError(msg)


def _rng(seed):
    if seed is None:
        raise ValueError("a seed is required for reproducible graph generation")
    return np.random.default_rng(seed)


def generate(spec: GraphModelSpec) -> WeightedGraph:
    """Draw a unit-weight graph from ``spec``'s ensemble.

    Deterministic given ``spec.seed``.
    """
    kind, p = spec.kind, spec.params
    if kind == "square-grid":
        return _grid(int(p["rows"]), int(p["cols"]))
    rng = _rng(spec.seed)
    n = int(p["n"])
    if kind == "erdos-renyi":
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(iu.size) < p["p"]
        return WeightedGraph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))
    if kind == "small-world":
        return _small_world(n, int(p["m"]), float(p["theta"]), rng)
    return _scale_free(n, float(p["sigma"]), int(p["min_degree"]), rng)


def _grid(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return WeightedGraph.from_edges(rows * cols, edges)


def _small_world(n, m, theta, rng):
    # Newman-Watts: each ring bond spawns a shortcut with probability theta
    ring = [(i, (i + s) % n) for i in range(n) for s in range(1, m + 1)]
    edges = {_edge_key(i, j) for i, j in ring}
    for i, _ in ring:
        if rng.random() >= theta:
            continue
        candidates = [j for j in range(n) if j != i and _edge_key(i, j) not in edges]
        if candidates:
            edges.add(_edge_key(i, candidates[rng.integers(len(candidates))]))
    return WeightedGraph.from_edges(n, edges)


def _scale_free(n, sigma, min_degree, rng, max_rounds=50):
    support = np.arange(min_degree, n)
    pmf = support.astype(float) ** (-sigma)
    pmf /= pmf.sum()
    deg = rng.choice(support, size=n, p=pmf)
    for _ in range(1000):
        if deg.sum() % 2 == 0:
            break
        deg[-1] = rng.choice(support, p=pmf)
    else:
        deg[-1] += 1 if deg[-1] < n - 1 else -1
    stubs = np.repeat(np.arange(n), deg)
    edges = set()
    for _ in range(max_rounds):
        if stubs.size < 2:
            break
        rng.shuffle(stubs)
        leftover = []
        pairs = stubs[: stubs.size - stubs.size % 2].reshape(-1, 2)
        if stubs.size % 2:
            leftover.append(int(stubs[-1]))
        for i, j in pairs.tolist():
            key = _edge_key(i, j)
            if i == j or key in edges:
                leftover.extend((i, j))
            else:
                edges.add(key)
        stubs = np.array(leftover, dtype=np.int64)
    return WeightedGraph.from_edges(n, edges)


def assign_weights(g: WeightedGraph, low: float, high: float, seed) -> WeightedGraph:
    """Give every edge one weight drawn uniformly from ``(low, high]``.

    The interval is open at ``low``, so ``low = 0`` still yields strictly
    positive weights. Weights are not normalised.
    """
    if low < 0 or high <= 0:
        raise ValueError(f"weight range ({low}, {high}] must be positive")
    if high < low:
        raise ValueError(f"empty weight range ({low}, {high}]")
    u = np.random.default_rng(seed).random(g.n_edges)
    w = high - (high - low) * u
    return g.with_weights(dict(zip(g.edges, w.tolist())))


def laplacian(g: WeightedGraph) -> np.ndarray:
    W = g.adjacency()
    return np.diag(W.sum(axis=1)) - W


def laplacian_eigenvalues(g: WeightedGraph, rel_tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """All Laplacian eigenvalues in ascending order (cyclic Jacobi)."""
    if g.n == 0:
        return np.zeros(0)
    L = np.ascontiguousarray(laplacian(g), dtype=np.float64)
    ev, _ = kernels.jacobi_eigenvalues(L, rel_tol, max_sweeps)
    return np.asarray(ev)


def spectral_bounds(g: WeightedGraph) -> SpectralSummary:
    """Algebraic connectivity and spectral radius of the weighted Laplacian."""
    if g.n < 2:
        raise DisconnectedGraphError("spectral bounds need at least two nodes")
    if not is_connected(g):
        raise DisconnectedGraphError(
            "graph is disconnected: the zero Laplacian eigenvalue is not simple"
        )
    ev = laplacian_eigenvalues(g)
    return SpectralSummary(float(ev[1]), float(ev[-1]))


def is_connected(g: WeightedGraph) -> bool:
    if g.n <= 1:
        return True
    u, v, _ = g.edge_arrays
    mask = np.ones((1, g.n_edges), dtype=np.uint8)
    return bool(kernels.connected_batch(g.n, u, v, mask)[0])


def component_labels(g: WeightedGraph) -> np.ndarray:
    u, v, _ = g.edge_arrays
    mask = np.ones((1, g.n_edges), dtype=np.uint8)
    return kernels.component_labels_batch(g.n, u, v, mask)[0]


def diameter(g: WeightedGraph) -> int:
    """Hop diameter; raises for disconnected graphs."""
    adj = [[] for _ in range(g.n)]
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    best = 0
    for s in range(g.n):
        dist = [-1] * g.n
        dist[s] = 0
        queue = deque([s])
        while queue:
            i = queue.popleft()
            for j in adj[i]:
                if dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue.append(j)
        if min(dist) < 0:
            raise DisconnectedGraphError("diameter of a disconnected graph is infinite")
        best = max(best, max(dist))
    return best


def union_graph(graphs: Sequence[WeightedGraph]) -> WeightedGraph:
    """Edge-set union; a union edge keeps the weight of its earliest holder."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("union of an empty sequence")
    n = graphs[0].n
    weights: dict[tuple[int, int], float] = {}
    for g in graphs:
        if g.n != n:
            raise ValueError(f"node counts differ: {n} vs {g.n}")
        for e, w in g.weights.items():
            weights.setdefault(e, w)
    return WeightedGraph(n, weights)


def mean_degree(g: WeightedGraph) -> float:
    return 2.0 * g.n_edges / g.n if g.n else 0.0


def write_edge_list(g: WeightedGraph, stream) -> None:
    stream.write(f"n {g.n}\n")
    for (i, j), w in g.weights.items():
        stream.write(f"{i + 1} {j + 1} {w!r}\n")


def read_edge_list(stream) -> WeightedGraph:
    lines = [ln.strip() for ln in stream if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty edge-list file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "n":
        raise ValueError(f"edge list must start with 'n <count>', got {lines[0]!r}")
    n = int(head[1])
    weights = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"line {lineno}: expected 'i j [w]', got {ln!r}")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        weights[_edge_key(i, j)] = float(parts[2]) if len(parts) == 3 else 1.0
    return WeightedGraph(n, weights)
