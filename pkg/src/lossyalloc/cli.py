"""``lossyalloc`` command-line interface.

Exit codes: 0 success, 1 usage, 2 configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor


from . import __version__
from ._backend import BACKEND
from .config import OUTPUT_DIR_ENV, ConfigError, ExperimentConfig, SCHEMA, default_output_dir
from .dynamics import ContractViolation, OracleError
from .graph import (
    DisconnectedGraphError,
    GraphModelSpec,
    assign_weights,
    generate,
    is_connected,
    laplacian_eigenvalues,
    mean_degree,
    read_edge_list,
    spectral_bounds,
    union_graph,
    write_edge_list,
)
from .objectives import SectorViolation
from .percolation import (
    CSV_HEADER,
    DIVERGENT_SF,
    bond_threshold,
    conservative_window,
    drop_to_removal_rate,
    estimate_threshold_mc,
    min_window_B,
    window_for_removal_rate,
)
from .sim import run, window_connectivity_audit

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SUMMARY_FIELDS = ("rows", "termination", "eta", "final_F", "final_residual", "feasibility_violation",
                  "oracle_gap", "phi_star", "sliding_connected_rate", "disjoint_connected_rate",
                  "min_empirical_B")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, f"usage: {message}")


def _probability(text):
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= p <= 1:
        raise argparse.ArgumentTypeError(f"probability {p} outside [0, 1]")
    return p


def _out_dir(args) -> str:
    path = args.out or default_output_dir()
    os.makedirs(path, exist_ok=True)
    return path


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _add_model_flags(p, *, required=True):
    p.add_argument("--model", choices=("er", "sw", "sf", "grid"), required=required)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--theta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--min-degree", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--seed", type=int, default=0)


def _model_spec(args, seed=None) -> GraphModelSpec:
    names = {"er": ("n", "p"), "sw": ("n", "m", "theta"), "sf": ("n", "sigma", "min_degree"),
             "grid": ("rows", "cols")}[args.model]
    params = {k: getattr(args, k) for k in names}
    missing = [k for k, v in params.items() if v is None]
    if missing:
        raise CliError(EXIT_USAGE, f"usage: model {args.model} needs --{missing[0].replace('_', '-')}")
    try:
        return GraphModelSpec(args.model, params, seed=args.seed if seed is None else seed)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"usage: {exc}") from exc


def _load_graph(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return read_edge_list(fh)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read graph {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"bad edge list {path}: {exc}") from exc


# subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    g = generate(_model_spec(args))
    if args.weights:
        low, high = args.weights
        try:
            g = assign_weights(g, low, high, args.weight_seed if args.weight_seed is not None else args.seed)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, f"usage: {exc}") from exc
    path = args.output or os.path.join(_out_dir(args), "graph.edges")
    with open(path, "w", encoding="utf-8") as fh:
        write_edge_list(g, fh)
    _emit(f"n={g.n} edges={g.n_edges} connected={str(is_connected(g)).lower()} "
          f"mean_degree={mean_degree(g)!r} path={path}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    g = _load_graph(args.graph) if args.graph else generate(_model_spec(args))
    if args.all:
        _emit(",".join(repr(float(v)) for v in laplacian_eigenvalues(g)))
        return EXIT_OK
    s = spectral_bounds(g)
    _emit("lambda2,lambdaN,ratio")
    _emit(f"{s.lambda2!r},{s.lambdaN!r},{s.ratio!r}")
    return EXIT_OK


def cmd_percolation(args) -> int:
    _emit(CSV_HEADER)
    if args.mc:
        spec = _model_spec(args)
        res = estimate_threshold_mc(spec, args.trials, args.step, args.seed, criterion=args.criterion)
        _emit(res.csv_row(f"{spec.summary()};trials={args.trials};step={args.step!r}"))
        return EXIT_OK
    params, summary = {}, ""
    graph = _load_graph(args.graph) if args.graph else None
    if args.model == "er":
        if args.mean_degree is None and graph is None and (args.n is None or args.p is None):
            raise CliError(EXIT_USAGE, "usage: er needs --mean-degree, --graph, or --n and --p")
        params = {k: getattr(args, k) for k in ("n", "p") if getattr(args, k) is not None}
        summary = f"mean_degree={args.mean_degree!r}" if args.mean_degree is not None else ""
    elif args.model == "sw":
        if args.theta is None:
            raise CliError(EXIT_USAGE, "usage: sw needs --theta")
        params, summary = {"theta": args.theta, "m": args.m}, f"theta={args.theta!r}"
    elif args.model == "sf":
        if args.sigma is None or args.min_degree is None:
            raise CliError(EXIT_USAGE, "usage: sf needs --sigma and --min-degree")
        params = {"sigma": args.sigma, "min_degree": args.min_degree}
        summary = f"sigma={args.sigma!r};min_degree={args.min_degree}"
    res = bond_threshold(args.model, graph=graph, mean_degree_value=args.mean_degree, **params)
    _emit(res.csv_row(summary))
    if res.flag == DIVERGENT_SF:
        raise CliError(EXIT_NUMERIC, f"scale-free sigma={args.sigma} <= 3: {DIVERGENT_SF}")
    return EXIT_OK


def _read_rates(path):
    rates = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if line:
                    # "p" or "i j p" or "i j p_ij p_ji": every trailing rate counts
                    parts = line.split()
                    vals = parts if len(parts) == 1 else parts[2:]
                    if not vals:
                        raise CliError(EXIT_CONFIG, f"{path} line {lineno}: no rate")
                    rates.extend(_probability(v) for v in vals)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read rates file {path}: {exc.strerror}") from exc
    except argparse.ArgumentTypeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from exc
    if not rates:
        raise CliError(EXIT_CONFIG, f"{path}: no rates")
    return rates


def cmd_bstar(args) -> int:
    if (args.pd is None) == (args.rates_file is None):
        raise CliError(EXIT_USAGE, "usage: give exactly one of --pd or --rates-file")
    if not 0 < args.pc <= 1:
        raise CliError(EXIT_USAGE, f"usage: threshold {args.pc} outside (0, 1]")
    try:
        if args.rates_file:
            B = conservative_window(_read_rates(args.rates_file), args.pc)
        else:
            B = min_window_B(args.pd, args.pc)
    except ValueError as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from exc
    _emit(str(B))
    return EXIT_OK


def _summary_row(trace) -> dict:
    s = trace.summary()
    s["eta"] = trace.config.eta
    # JSON has no NaN/inf; diverged runs report null
    return {k: None if isinstance(v, float) and not math.isfinite(v) else v for k, v in s.items()}


def _write_run_outputs(cfg: ExperimentConfig, trace, out_dir: str) -> dict:
    trace_path = os.path.join(out_dir, cfg["output"]["trace"])
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        trace.write_csv(fh)
    summary = _summary_row(trace)
    meta = {
        "seed": cfg["experiment"]["seed"],
        "termination": trace.termination,
        "backend": BACKEND,
        "version": __version__,
        "summary": summary,
        "config": cfg.to_text(),
    }
    with open(trace_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg["output"]["states"]:
        with open(os.path.join(out_dir, cfg["output"]["states"]), "w", encoding="utf-8", newline="") as fh:
            trace.write_states_csv(fh)
    return summary


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.set("experiment", "seed", str(args.seed))
    trace = run(cfg.build_run())
    summary = _write_run_outputs(cfg, trace, _out_dir(args))
    _emit(json.dumps(summary, sort_keys=True))
    if trace.termination == "diverged":
        raise CliError(EXIT_NUMERIC, f"iterates diverged by k={len(trace) - 1}; reduce eta")
    return EXIT_OK


def _parse_vary(items):
    axes = []
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise CliError(EXIT_USAGE, f"usage: --vary expects section.key=v1,v2,..., got {item!r}")
        name, values = item.split("=", 1)
        section, key = name.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            valid = ", ".join(f"{s}.{k}" for s, ks in SCHEMA.items() for k in ks)
            raise CliError(EXIT_CONFIG, f"unknown sweep key {name!r}; valid keys: {valid}")
        # list-valued keys (e.g. objectives.box=2,7;1,8) separate points with ';'
        sep = ";" if ";" in values else ","
        vals = [v.strip() for v in values.split(sep) if v.strip()]
        axes.append((section, key, vals))
    return axes


def _sweep_point(payload):
    text, settings = payload
    cfg = ExperimentConfig.from_text(text)
    for section, key, raw in settings:
        cfg.set(section, key, raw)
    cfg.validate()
    return _summary_row(run(cfg.build_run()))


def cmd_sweep(args) -> int:
    base = ExperimentConfig.from_file(args.config)
    axes = _parse_vary(args.vary)
    points = [list(zip([(s, k) for s, k, _ in axes], combo)) for combo in itertools.product(*[v for *_, v in axes])]
    payloads = []
    for point in points:
        settings = [(s, k, raw) for (s, k), raw in point]
        trial = base.copy()
        for s, k, raw in settings:
            trial.set(s, k, raw)
        trial.validate()
        payloads.append((base.to_text(), settings))
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    header = [f"{s}.{k}" for s, k, _ in axes] + list(SUMMARY_FIELDS)
    lines = [",".join(header)]
    for (_, settings), row in zip(payloads, rows):
        cells = [raw for *_, raw in settings]
        cells += ["" if row.get(f) is None else (repr(row[f]) if isinstance(row[f], float) else str(row[f]))
                  for f in SUMMARY_FIELDS]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    path = args.output or os.path.join(_out_dir(args), "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


REPLICATION_RATES = (0.4, 0.46, 0.54, 0.62, 0.73)


def replication_config(max_iters: int = 6000) -> ExperimentConfig:
    """Pinned, seeded recipe for the 20-node lossy allocation example."""
    text = f"""
[experiment]
seed = 0
name = replication
[graph]
model = er
n = 20
p = 0.3
seed = 33
[weights]
mode = uniform
low = 0
high = 10
seed = 0
[objectives]
kind = quad-logexp
a = 0.02,0.05
c = 2,7
l = 0,0.3
d = 2,7
box = 2,7
gamma = 1
seed = 0
[maps]
g_n = cubic
g_l = log-quantizer
g_l_rho = {1 / 256!r}
[dynamics]
eta = 0.05
b = 100
max_iters = {max_iters}
[drops]
mode = scheduled
rates = {",".join(map(str, REPLICATION_RATES))}
period = 40
seed = 0
[audit]
B = 23
[output]
trace = trace.csv
states = states.csv
"""
    return ExperimentConfig.from_text(text, source="<replication>")


def cmd_replicate(args) -> int:
    out = _out_dir(args)
    cfg = replication_config(args.iters)
    with open(os.path.join(out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    rc = cfg.build_run()
    with open(os.path.join(out, "graph.edges"), "w", encoding="utf-8") as fh:
        write_edge_list(rc.graph, fh)

    # window sizing against the stated and the instance's own thresholds
    k_mean = mean_degree(rc.graph)
    thresholds = {"1/5.6": 1 / 5.6, "0.177": 0.177, f"instance 1/{k_mean:g}": 1 / k_mean}
    rows = ["p_d,p_l,p_l_2dp,p_c_label,p_c,B_star,B_star_from_p_l_2dp"]
    for label, p_c in thresholds.items():
        for p_d in REPLICATION_RATES:
            p_l = drop_to_removal_rate(p_d)
            rows.append(f"{p_d!r},{p_l!r},{round(p_l, 2)!r},{label},{p_c!r},{min_window_B(p_d, p_c)},"
                        f"{window_for_removal_rate(round(p_l, 2), p_c)}")
    with open(os.path.join(out, "bstar.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")

    trace = run(rc)
    summary = _write_run_outputs(cfg, trace, out)

    # spectra of the union graphs over disjoint audit windows
    B = rc.audit_B
    log = trace.links
    masks = log.masks()
    srows = ["window,start,stop,edges,connected,lambda2,lambdaN"]
    s = spectral_bounds(rc.graph)
    srows.append(f"base,0,{len(trace) - 1},{rc.graph.n_edges},true,{s.lambda2!r},{s.lambdaN!r}")
    lam2 = []
    for w, start in enumerate(range(0, masks.shape[0] - B, B + 1)):
        union = union_graph([rc.graph.subgraph(m.astype(bool)) for m in masks[start:start + B + 1]])
        ev = laplacian_eigenvalues(union)
        conn = is_connected(union)
        lam2.append(float(ev[1]) if conn else 0.0)
        srows.append(f"{w},{start},{start + B},{union.n_edges},{str(conn).lower()},"
                     f"{float(ev[1]) if conn else 0.0!r},{float(ev[-1])!r}")
    with open(os.path.join(out, "union_spectra.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(srows) + "\n")

    rep = window_connectivity_audit(trace, B)
    summary.update(
        mean_degree=k_mean,
        base_lambda2=s.lambda2,
        base_lambdaN=s.lambdaN,
        union_windows=len(lam2),
        union_min_lambda2=min(lam2) if lam2 else None,
        union_connected_windows=int(rep.disjoint.sum()),
        x_final_min=float(trace.x_final.min()),
        x_final_max=float(trace.x_final.max()),
    )
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lossyalloc", description=__doc__.splitlines()[0],
                     epilog=f"Default output directory: ${OUTPUT_DIR_ENV}, else the current directory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random graph as an edge list")
    _add_model_flags(p)
    p.add_argument("--weights", type=float, nargs=2, metavar=("LOW", "HIGH"),
                   help="draw link weights uniformly from (LOW, HIGH]; default unit weights")
    p.add_argument("--weight-seed", type=int)
    p.add_argument("--output", "-o", help="edge-list path (default: OUT/graph.edges)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spectrum", help="Laplacian lambda2 and lambdaN of a graph")
    _add_model_flags(p, required=False)
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--all", action="store_true", help="print every eigenvalue")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("percolation", help="bond-percolation threshold (analytic or Monte-Carlo)")
    _add_model_flags(p)
    p.add_argument("--mean-degree", type=float)
    p.add_argument("--graph", help="edge list (mean degree for er)")
    p.add_argument("--mc", action="store_true", help="Monte-Carlo estimate instead of the closed form")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--criterion", choices=("giant", "connected"), default="giant")
    p.set_defaults(func=cmd_percolation)

    p = sub.add_parser("bstar", help="minimal window B for a drop rate and threshold")
    p.add_argument("--pd", type=_probability)
    p.add_argument("--pc", type=float, required=True)
    p.add_argument("--rates-file", help="per-link rates; the worst one sizes the window")
    p.set_defaults(func=cmd_bstar)

    p = sub.add_parser("run", help="single run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override [experiment] seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Cartesian parameter sweep, one summary row per point")
    p.add_argument("--config", required=True)
    p.add_argument("--vary", action="append", default=[], metavar="SECTION.KEY=V1,V2,...")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", "-o", help="CSV path (default: OUT/sweep.csv)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replicate-paper", help="seeded 20-node lossy allocation example")
    p.add_argument("--iters", type=int, default=6000)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config: {exc}"
    except (OracleError, DisconnectedGraphError, SectorViolation, ContractViolation,
            FloatingPointError, OverflowError) as exc:
        code, msg = EXIT_NUMERIC, f"numeric: {exc}"
    except ValueError as exc:
        code, msg = EXIT_USAGE, f"usage: {exc}"
    except OSError as exc:
        code, msg = EXIT_CONFIG, f"io: {exc}"
    sys.stderr.write("lossyalloc: error: " + " ".join(msg.split()) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
