"""Experiment configuration files (INI sections) and their translation to runs."""

from __future__ import annotations

import configparser
import copy
import os
from dataclasses import dataclass

import numpy as np

from .dynamics import suggest_step_size
from .graph import GraphModelSpec, WeightedGraph, assign_weights, generate, read_edge_list
from .objectives import NonlinearMap, ParameterRanges, random_objectives
from .sim import DropSchedule, RunConfig

__all__ = ["ConfigError", "ExperimentConfig", "OUTPUT_DIR_ENV", "default_output_dir"]

OUTPUT_DIR_ENV = "LOSSYALLOC_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; names the offending section and key."""

    def __init__(self, section, key, message):
        where = f"[{section}]" + (f" {key}" if key else "")
        super().__init__(f"{where}: {message}")
        self.section, self.key = section, key


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV) or "."


def _opt(conv):
    def parse(text):
        text = text.strip()
        return None if text.lower() in ("", "none") else conv(text)

    return parse


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return vals


def _eta(text):
    t = text.strip().lower()
    if t == "auto":
        return "auto:0.9"
    if t.startswith("auto:"):
        factor = float(t[5:])
        if not factor > 0:
            raise ValueError("auto factor must be positive")
        return f"auto:{factor!r}"
    return float(t)


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


_MAPS = ("identity", "cubic", "signum-power", "log-quantizer", "uniform-quantizer")
_opt_int, _opt_float = _opt(int), _opt(float)

# section -> key -> (parser, default); defaults are stored parsed
SCHEMA = {
    "experiment": {"seed": (int, 0), "name": (str, "run")},
    "graph": {
        "model": (_choice("er", "sw", "sf", "grid", "file"), "er"),
        "n": (_opt_int, 20), "p": (_opt_float, 0.3), "m": (_opt_int, None), "theta": (_opt_float, None),
        "sigma": (_opt_float, None), "min_degree": (_opt_int, None),
        "rows": (_opt_int, None), "cols": (_opt_int, None),
        "path": (_opt(str), None), "seed": (_opt_int, None),
    },
    "weights": {"mode": (_choice("uniform", "unit", "file"), "uniform"), "low": (float, 0.0),
                "high": (float, 10.0), "seed": (_opt_int, None)},
    "objectives": {
        "kind": (_choice("quadratic", "quad-logexp"), "quad-logexp"),
        "a": (_pair, (0.5, 1.5)), "c": (_pair, (2.0, 7.0)), "l": (_pair, (0.0, 0.5)), "d": (_pair, (2.0, 7.0)),
        "box": (_opt(_pair), (2.0, 7.0)), "gamma": (float, 1.0), "seed": (_opt_int, None),
    },
    "maps": {
        "g_n": (_choice(*_MAPS), "identity"), "g_n_rho": (_opt_float, None),
        "g_n_v1": (_opt_float, None), "g_n_v2": (_opt_float, None),
        "g_l": (_choice(*_MAPS), "identity"), "g_l_rho": (_opt_float, None),
        "g_l_v1": (_opt_float, None), "g_l_v2": (_opt_float, None),
    },
    "dynamics": {
        "eta": (_eta, "auto:0.9"), "b": (float, 100.0), "max_iters": (int, 1000),
        "dispersion_tol": (float, 0.0), "oracle": (_bool, True), "oracle_tol": (float, 1e-12),
        "region": (_opt(_pair), None),
    },
    "drops": {
        "mode": (_choice("none", "homogeneous", "scheduled", "heterogeneous"), "none"),
        "p_d": (float, 0.0), "rates": (_floats, ()), "period": (int, 1),
        "rates_file": (_opt(str), None), "seed": (_opt_int, None),
    },
    "audit": {"B": (_opt_int, None), "record_links": (_opt(_bool), None)},
    "output": {"trace": (str, "trace.csv"), "states": (_opt(str), None)},
}


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Parsed configuration: ``values[section][key]`` with defaults filled in."""

    values: dict

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError("?", None, f"unreadable config: {str(exc).splitlines()[0]}") from exc
        cfg = cls.defaults()
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("?", None, f"cannot read config {path}: {exc.strerror}") from exc
        return cls.from_text(text, source=str(path))

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig(copy.deepcopy(self.values))

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SCHEMA:
            raise ConfigError(section, None, f"unknown section; valid sections: {', '.join(SCHEMA)}")
        keys = SCHEMA[section]
        if key not in keys:
            raise ConfigError(section, key, f"unknown key; valid keys: {', '.join(keys)}")
        try:
            self.values[section][key] = keys[key][0](raw)
        except ValueError as exc:
            raise ConfigError(section, key, str(exc)) from exc

    def __getitem__(self, section):
        return self.values[section]

    def to_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {_format(self.values[section][k])}" for k in keys)
            lines.append("")
        return "\n".join(lines)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.to_text() == other.to_text()

    def validate(self) -> None:
        v = self.values
        model = v["graph"]["model"]
        if model == "file" and not v["graph"]["path"]:
            raise ConfigError("graph", "path", "model = file needs a path")
        if v["weights"]["mode"] == "file" and model != "file":
            raise ConfigError("weights", "mode", "weights from file need graph model = file")
        if v["dynamics"]["max_iters"] < 1:
            raise ConfigError("dynamics", "max_iters", "must be >= 1")
        eta = v["dynamics"]["eta"]
        if isinstance(eta, float) and not eta > 0:
            raise ConfigError("dynamics", "eta", "must be positive")
        d = v["drops"]
        if d["mode"] == "scheduled" and (not d["rates"] or d["period"] < 1):
            raise ConfigError("drops", "rates", "scheduled drops need rates and a positive period")
        if d["mode"] == "heterogeneous" and not d["rates_file"]:
            raise ConfigError("drops", "rates_file", "heterogeneous drops need a rates file")
        for key in ("p_d", "rates"):
            vals = d[key] if isinstance(d[key], tuple) else (d[key],)
            if any(not 0 <= p <= 1 for p in vals):
                raise ConfigError("drops", key, "probabilities must lie in [0, 1]")
        B = v["audit"]["B"]
        if B is not None and B < 0:
            raise ConfigError("audit", "B", "must be >= 0")
        for m in ("g_n", "g_l"):
            try:
                self._map(m)
            except ValueError as exc:
                raise ConfigError("maps", m, str(exc)) from exc

    # building blocks -----------------------------------------------------

    def _seed(self, section: str, index: int) -> int:
        explicit = self.values[section].get("seed")
        if explicit is not None:
            return explicit
        child = np.random.SeedSequence(self.values["experiment"]["seed"]).spawn(index + 1)[index]
        return int(child.generate_state(1)[0])

    def _map(self, name: str) -> NonlinearMap:
        m = self.values["maps"]
        return NonlinearMap(m[name], rho=m[f"{name}_rho"], v1=m[f"{name}_v1"], v2=m[f"{name}_v2"])

    def build_graph(self) -> WeightedGraph:
        g, w = self.values["graph"], self.values["weights"]
        model = g["model"]
        try:
            if model == "file":
                with open(g["path"], encoding="utf-8") as fh:
                    graph = read_edge_list(fh)
            else:
                names = {"er": ("n", "p"), "sw": ("n", "m", "theta"), "sf": ("n", "sigma", "min_degree"),
                         "grid": ("rows", "cols")}[model]
                params = {k: g[k] for k in names}
                if model == "sw" and params["m"] is None:
                    params["m"] = 1
                missing = [k for k, val in params.items() if val is None]
                if missing:
                    raise ConfigError("graph", missing[0], f"required for model {model}")
                graph = generate(GraphModelSpec(model, params, seed=self._seed("graph", 0)))
        except OSError as exc:
            raise ConfigError("graph", "path", f"cannot read edge list: {exc.strerror}") from exc
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("graph", None, str(exc)) from exc
        if w["mode"] == "uniform":
            try:
                graph = assign_weights(graph, w["low"], w["high"], self._seed("weights", 1))
            except ValueError as exc:
                raise ConfigError("weights", None, str(exc)) from exc
        elif w["mode"] == "unit":
            graph = graph.with_weights({e: 1.0 for e in graph.edges})
        return graph

    def build_objectives(self, n: int):
        o = self.values["objectives"]
        ranges = ParameterRanges(a=o["a"], c=o["c"], l=o["l"], d=o["d"])
        if not ranges.a[0] > 0:
            raise ConfigError("objectives", "a", "curvatures must be positive")
        return random_objectives(n, self._seed("objectives", 2), kind=o["kind"], ranges=ranges,
                                 box=o["box"], gamma=o["gamma"])

    def build_drops(self, graph: WeightedGraph) -> DropSchedule:
        d = self.values["drops"]
        seed = self._seed("drops", 3)
        if d["mode"] == "none":
            return DropSchedule.reliable()
        if d["mode"] == "homogeneous":
            return DropSchedule("homogeneous", p_d=d["p_d"], seed=seed)
        if d["mode"] == "scheduled":
            return DropSchedule("scheduled", rates=d["rates"], period=d["period"], seed=seed)
        try:
            rates = read_link_rates(d["rates_file"], graph)
        except OSError as exc:
            raise ConfigError("drops", "rates_file", f"cannot read: {exc.strerror}") from exc
        except ValueError as exc:
            raise ConfigError("drops", "rates_file", str(exc)) from exc
        return DropSchedule("heterogeneous", link_rates=rates, seed=seed)

    def region(self):
        dyn, o = self.values["dynamics"], self.values["objectives"]
        if dyn["region"] is not None:
            return dyn["region"]
        return o["box"] if o["box"] is not None else o["c"]

    def build_run(self) -> RunConfig:
        graph = self.build_graph()
        objs = self.build_objectives(graph.n)
        g_n, g_l = self._map("g_n"), self._map("g_l")
        dyn, audit = self.values["dynamics"], self.values["audit"]
        eta = dyn["eta"]
        if isinstance(eta, str):
            B = audit["B"] or 0
            eta = suggest_step_size(graph, objs, g_n, g_l, self.region(), B=B, factor=float(eta[5:]))
        boxes = self.values["objectives"]["box"]
        try:
            return RunConfig(
                graph=graph, objectives=objs, g_n=g_n, g_l=g_l, eta=eta, b=dyn["b"], boxes=boxes,
                drops=self.build_drops(graph), max_iters=dyn["max_iters"],
                dispersion_tol=dyn["dispersion_tol"], audit_B=audit["B"], record_links=audit["record_links"],
                record_states=self.values["output"]["states"] is not None, oracle=dyn["oracle"],
                oracle_tol=dyn["oracle_tol"], seed=self.values["experiment"]["seed"],
            )
        except ValueError as exc:
            raise ConfigError("dynamics", None, str(exc)) from exc


def read_link_rates(path, graph: WeightedGraph) -> np.ndarray:
    """Per-link drop rates: lines ``i j p`` or ``i j p_ij p_ji`` (1-based nodes).

    Links not listed get rate 0; returns an ``(n_edges, 2)`` array in the
    graph's edge order.
    """
    index = {e: k for k, e in enumerate(graph.edges)}
    rates = np.zeros((graph.n_edges, 2))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"line {lineno}: expected 'i j p' or 'i j p_ij p_ji'")
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            key = (min(i, j), max(i, j))
            if key not in index:
                raise ValueError(f"line {lineno}: ({i + 1}, {j + 1}) is not a link of the graph")
            p = [float(x) for x in parts[2:]]
            if len(p) == 1:
                p = p * 2
            elif i > j:
                p = p[::-1]
            rates[index[key]] = p
    if np.any((rates < 0) | (rates > 1)):
        raise ValueError("drop rates must lie in [0, 1]")
    return rates
