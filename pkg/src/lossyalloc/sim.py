"""Packet-drop processes and the allocation run loop over switching topologies."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .dynamics import KktSolution, feasible_init, kkt_oracle
from .graph import WeightedGraph
from .objectives import LocalObjective, NonlinearMap, ObjectiveArrays

__all__ = [
    "AuditReport",
    "DropSchedule",
    "LinkLog",
    "RunConfig",
    "RunTrace",
    "TRACE_HEADER",
    "run",
    "sample_active_links",
    "window_connectivity_audit",
]

TRACE_HEADER = "k,F,residual,sum_x,active_edges,window_connected"
BLOCK = 2048


@dataclass(frozen=True)
class DropSchedule:
    """Per-direction loss process on every link.

    * ``homogeneous``: every direction of every link drops with ``p_d``.
    * ``heterogeneous``: ``link_rates`` holds one rate per edge (both
      directions) or an ``(n_edges, 2)`` array of directional rates, in the
      graph's sorted edge order.
    * ``scheduled``: the rates in ``rates`` are played for ``period`` steps
      each; every cycle of ``len(rates)`` periods uses a fresh random
      permutation drawn from ``seed``.
    """

    mode: str = "homogeneous"
    p_d: float = 0.0
    link_rates: tuple | np.ndarray | None = None
    rates: tuple[float, ...] = ()
    period: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("homogeneous", "heterogeneous", "scheduled"):
            raise ValueError(f"unknown drop mode {self.mode!r}")
        probs = [self.p_d, *self.rates]
        if self.link_rates is not None:
            probs.extend(np.asarray(self.link_rates, dtype=float).ravel().tolist())
        for p in probs:
            if not 0 <= p <= 1:
                raise ValueError(f"drop probability {p} outside [0, 1]")
        if self.mode == "heterogeneous" and self.link_rates is None:
            raise ValueError("heterogeneous schedule needs link_rates")
        if self.mode == "scheduled":
            if not self.rates:
                raise ValueError("scheduled mode needs at least one rate")
            if self.period < 1:
                raise ValueError("schedule period must be positive")
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @classmethod
    def reliable(cls) -> "DropSchedule":
        return cls("homogeneous", 0.0)

    def max_rate(self) -> float:
        if self.mode == "homogeneous":
            return self.p_d
        if self.mode == "scheduled":
            return max(self.rates)
        return float(np.max(self.link_rates))

    def permutation(self, cycle: int, seed=None) -> np.ndarray:
        base = self.seed if self.seed is not None else seed
        if base is None:
            raise ValueError("scheduled drops need a seed")
        return np.random.default_rng([int(base), int(cycle)]).permutation(len(self.rates))

    def direction_rates(self, ks: np.ndarray, n_edges: int, seed=None) -> np.ndarray:
        """Rates broadcastable to ``(len(ks), n_edges, 2)``."""
        if self.mode == "homogeneous":
            return np.full((1, 1, 1), self.p_d)
        if self.mode == "heterogeneous":
            r = np.asarray(self.link_rates, dtype=float)
            if r.shape[0] != n_edges:
                raise ValueError(f"{r.shape[0]} link rates for {n_edges} edges")
            return (r[:, None] if r.ndim == 1 else r)[None, :, :]
        per_cycle = self.period * len(self.rates)
        out = np.empty(len(ks))
        cycles = np.asarray(ks) // per_cycle
        for cyc in np.unique(cycles):
            perm = self.permutation(int(cyc), seed)
            sel = cycles == cyc
            slot = (np.asarray(ks)[sel] % per_cycle) // self.period
            out[sel] = np.asarray(self.rates)[perm[slot]]
        return out[:, None, None]

    def rate_at(self, k: int, seed=None) -> float:
        """Homogeneous or scheduled rate in force at iteration ``k``."""
        if self.mode == "heterogeneous":
            raise ValueError("heterogeneous schedules have no single rate")
        return float(self.direction_rates(np.array([k]), 1, seed).ravel()[0])


def _draw_masks(rng, schedule: DropSchedule, ks: np.ndarray, n_edges: int, seed=None) -> np.ndarray:
    u = rng.random((len(ks), n_edges, 2))
    dropped = u < schedule.direction_rates(ks, n_edges, seed)
    # the link is discarded by both ends if either direction was lost
    return np.ascontiguousarray(~(dropped[..., 0] | dropped[..., 1]), dtype=np.uint8)


def sample_active_links(g: WeightedGraph, schedule: DropSchedule, k: int, rng, seed=None) -> WeightedGraph:
    """Links usable at iteration ``k``: both directional messages delivered.

    Surviving links keep their base weights; the result is symmetric by
    construction. ``rng`` is a :class:`numpy.random.Generator`.
    """
    mask = _draw_masks(rng, schedule, np.array([k]), g.n_edges, seed)[0]
    return g.subgraph(mask.astype(bool))


@dataclass(frozen=True)
class RunConfig:
    graph: WeightedGraph
    objectives: Sequence[LocalObjective]
    g_n: NonlinearMap
    g_l: NonlinearMap
    eta: float
    b: float
    boxes: object = None
    drops: DropSchedule = field(default_factory=DropSchedule.reliable)
    max_iters: int = 1000
    dispersion_tol: float = 0.0
    audit_B: int | None = None
    record_links: bool | None = None
    record_states: bool = False
    oracle: bool = True
    oracle_tol: float = 1e-12
    seed: int = 0
    x0: Sequence[float] | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"step size eta must be positive, got {self.eta}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.audit_B is not None and self.audit_B < 0:
            raise ValueError("audit window B must be >= 0")
        if len(self.objectives) != self.graph.n:
            raise ValueError(f"{len(self.objectives)} objectives for {self.graph.n} nodes")

    @property
    def keeps_links(self) -> bool:
        return self.audit_B is not None if self.record_links is None else self.record_links

    def init_boxes(self):
        if self.boxes is not None:
            return self.boxes
        if all(f.box is not None for f in self.objectives):
            return [f.box for f in self.objectives]
        raise ValueError("feasible initialisation needs boxes (config or objectives)")


@dataclass
class LinkLog:
    """Active-link masks per iteration, stored as packed bits."""

    graph: WeightedGraph
    packed: np.ndarray
    rows: int

    @classmethod
    def from_masks(cls, graph: WeightedGraph, masks) -> "LinkLog":
        masks = np.asarray(masks, dtype=bool)
        return cls(graph, np.packbits(masks, axis=1), masks.shape[0])

    def masks(self) -> np.ndarray:
        return np.ascontiguousarray(
            np.unpackbits(self.packed, axis=1, count=self.graph.n_edges), dtype=np.uint8
        )

    def active_graph(self, k: int) -> WeightedGraph:
        return self.graph.subgraph(self.masks()[k].astype(bool))


@dataclass
class RunTrace:
    k: np.ndarray
    F: np.ndarray
    residual: np.ndarray
    sum_x: np.ndarray
    active_edges: np.ndarray
    dispersion: np.ndarray
    window_connected: np.ndarray
    x_final: np.ndarray
    termination: str
    config: RunConfig
    x0: np.ndarray
    kkt: KktSolution | None = None
    F_star: float | None = None
    links: LinkLog | None = None
    states: np.ndarray | None = None

    def __len__(self):
        return self.k.size

    def feasibility_violation(self) -> float:
        return float(np.max(np.abs(self.sum_x - self.config.b)))

    def oracle_gap(self) -> float:
        if self.kkt is None:
            raise ValueError("run was made without the oracle")
        return float(np.max(np.abs(self.x_final - self.kkt.x_star)))

    def write_csv(self, stream) -> None:
        stream.write(TRACE_HEADER + "\n")
        wc = self.window_connected
        for r in range(self.k.size):
            flag = "" if wc[r] < 0 else str(int(wc[r]))
            res = "" if math.isnan(self.residual[r]) else repr(float(self.residual[r]))
            stream.write(
                f"{int(self.k[r])},{float(self.F[r])!r},{res},{float(self.sum_x[r])!r},"
                f"{int(self.active_edges[r])},{flag}\n"
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def write_states_csv(self, stream) -> None:
        if self.states is None:
            raise ValueError("states were not recorded (set record_states)")
        n = self.states.shape[1]
        stream.write("k," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
        for r in range(self.states.shape[0]):
            stream.write(f"{int(self.k[r])}," + ",".join(repr(float(v)) for v in self.states[r]) + "\n")

    def summary(self) -> dict:
        out = {
            "rows": int(self.k.size),
            "termination": self.termination,
            "final_F": float(self.F[-1]),
            "final_residual": None if self.F_star is None else float(self.residual[-1]),
            "feasibility_violation": self.feasibility_violation(),
            "oracle_gap": None if self.kkt is None else self.oracle_gap(),
            "phi_star": None if self.kkt is None else self.kkt.phi_star,
        }
        if self.links is not None and self.config.audit_B is not None and self.k.size > self.config.audit_B:
            rep = window_connectivity_audit(self, self.config.audit_B)
            out.update(
                audit_B=rep.B,
                sliding_connected_rate=rep.sliding_rate,
                disjoint_connected_rate=rep.disjoint_rate,
                min_empirical_B=rep.min_empirical_B,
            )
        return out


def run(config: RunConfig) -> RunTrace:
    """Feasible start, then sample links / update / record until termination.

    Row ``k`` of the trace holds ``x(k)`` and the size of the link set used
    for the update out of ``x(k)``. The loop ends after ``max_iters`` updates
    or once the gradient dispersion falls below ``dispersion_tol``.
    Deterministic given ``config.seed``.
    """
    g = config.graph
    n, E = g.n, g.n_edges
    init_seq, drop_seq, sched_seq = np.random.SeedSequence(config.seed).spawn(3)
    sched_seed = int(sched_seq.generate_state(1)[0])
    if config.x0 is not None:
        x = np.array(config.x0, dtype=np.float64)
        if x.shape != (n,):
            raise ValueError(f"x0 has shape {x.shape}, expected ({n},)")
    else:
        x = feasible_init(n, config.b, config.init_boxes(), init_seq)
    x0 = x.copy()
    arr = ObjectiveArrays.stack(config.objectives)
    kkt = kkt_oracle(config.objectives, config.b, config.oracle_tol) if config.oracle else None
    F_star = arr.total(kkt.x_star) if kkt is not None else None

    u, v, w = g.edge_arrays
    rng = np.random.default_rng(drop_seq)
    total_rows = config.max_iters + 1
    F = np.empty(total_rows)
    S = np.empty(total_rows)
    cnt = np.empty(total_rows, dtype=np.int64)
    disp = np.empty(total_rows)
    states = np.empty((total_rows, n)) if config.record_states else None
    masks_all = np.empty((total_rows, E), dtype=np.uint8) if config.keeps_links else None
    gn_p1, gn_p2 = config.g_n.params
    gl_p1, gl_p2 = config.g_l.params
    empty_x = np.empty((0, 0))

    row = 0
    termination = "max_iters"
    while row < total_rows:
        T = min(BLOCK, total_rows - row)
        ks = np.arange(row, row + T)
        masks = _draw_masks(rng, config.drops, ks, E, sched_seed)
        n_update = T if row + T < total_rows else T - 1
        out_x = states[row:row + T] if states is not None else empty_x
        done, stopped = kernels.run_block(
            x, u, v, w, masks,
            arr.kind, arr.a, arr.c, arr.l, arr.d, arr.lo, arr.hi, arr.gamma, arr.has_box,
            config.g_n.code, gn_p1, gn_p2, config.g_l.code, gl_p1, gl_p2,
            float(config.eta), float(config.dispersion_tol), n_update,
            F[row:row + T], S[row:row + T], cnt[row:row + T], disp[row:row + T], out_x,
        )
        if masks_all is not None:
            masks_all[row:row + done] = masks[:done]
        row += done
        if stopped:
            termination = "dispersion"
            break
        if not np.isfinite(F[row - 1]):
            termination = "diverged"
            break

    sl = slice(0, row)
    links = LinkLog.from_masks(g, masks_all[sl]) if masks_all is not None else None
    window = np.full(row, -1, dtype=np.int8)
    if links is not None and config.audit_B is not None and row > config.audit_B:
        flags = kernels.sliding_union_connected(n, u, v, masks_all[sl], config.audit_B)
        window[: flags.size] = flags
    residual = F[sl] - F_star if F_star is not None else np.full(row, np.nan)
    return RunTrace(
        k=np.arange(row), F=F[sl].copy(), residual=residual, sum_x=S[sl].copy(),
        active_edges=cnt[sl].copy(), dispersion=disp[sl].copy(), window_connected=window,
        x_final=x.copy(), termination=termination, config=config, x0=x0,
        kkt=kkt, F_star=F_star, links=links,
        states=states[sl].copy() if states is not None else None,
    )


@dataclass(frozen=True)
class AuditReport:
    B: int
    sliding: np.ndarray
    disjoint: np.ndarray
    min_empirical_B: int | None

    @property
    def sliding_rate(self) -> float:
        return float(self.sliding.mean()) if self.sliding.size else float("nan")

    @property
    def disjoint_rate(self) -> float:
        return float(self.disjoint.mean()) if self.disjoint.size else float("nan")

    @property
    def all_sliding(self) -> bool:
        return bool(self.sliding.all())

    @property
    def all_disjoint(self) -> bool:
        return bool(self.disjoint.all())


def window_connectivity_audit(trace: RunTrace | LinkLog, B: int) -> AuditReport:
    """Connectivity of the union graph over every window of ``B + 1`` steps.

    Reports sliding windows (every start ``k``), disjoint windows (starts at
    multiples of ``B + 1``) and the smallest window length for which every
    sliding window of the log is connected.
    """
    log = trace.links if isinstance(trace, RunTrace) else trace
    if log is None:
        raise ValueError("trace holds no active-link log; run with an audit window or record_links")
    if B < 0:
        raise ValueError("window B must be >= 0")
    if B >= log.rows:
        raise ValueError(f"window B={B} needs more than the {log.rows} recorded iterations")
    g = log.graph
    u, v, _ = g.edge_arrays
    masks = log.masks()

    def flags(b):
        return np.asarray(kernels.sliding_union_connected(g.n, u, v, masks, b), dtype=bool)

    sliding = flags(B)
    disjoint = sliding[:: B + 1]
    lo, hi = 0, log.rows - 1
    if not flags(hi).all():
        best = None
    else:
        while lo < hi:
            mid = (lo + hi) // 2
            if flags(mid).all():
                hi = mid
            else:
                lo = mid + 1
        best = lo
    return AuditReport(B, sliding, disjoint, best)
