"""Distributed resource allocation over lossy, switching networks."""

from ._backend import BACKEND
from .dynamics import (
    AllocationState,
    ContractViolation,
    KktSolution,
    OracleError,
    dispersion,
    feasible_init,
    kkt_oracle,
    laplacian_identity_check,
    quantization_neighborhood,
    step_bound,
    suggest_step_size,
    update_step,
)
from .graph import (
    DisconnectedGraphError,
    GraphModelSpec,
    SpectralSummary,
    WeightedGraph,
    assign_weights,
    generate,
    is_connected,
    laplacian,
    read_edge_list,
    spectral_bounds,
    union_graph,
    write_edge_list,
)
from .objectives import (
    LocalObjective,
    NonlinearMap,
    ObjectiveArrays,
    SectorViolation,
    curvature_bound,
    map_eval,
    objective_eval,
    random_objectives,
    sector_bounds,
)
from .percolation import (
    DropRateSpec,
    PercolationResult,
    admissible_drop_range,
    bond_threshold,
    conservative_window,
    drop_to_removal_rate,
    estimate_threshold_mc,
    hurwitz_zeta,
    min_window_B,
    window_for_removal_rate,
)
from .sim import DropSchedule, RunConfig, RunTrace, run, sample_active_links, window_connectivity_audit

__version__ = "0.1.0"
