"""Experiment harness: ``dbgnn {spectrum,spread,dirichlet,train,gradcheck}``.

Each subcommand reads a JSON config (``--config``) or a named ``--preset``,
writes CSV/SVG artifacts to ``--out`` and a ``manifest.json`` holding the
resolved config and artifact hashes. Passing a manifest back as ``--config``
reruns the same experiment.

Exit codes: 0 success, 1 claim/check failure, 2 usage or config error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff, dirac, dynamics, metrics
from .graph import (Graph, GraphError, load_graph, make_grid, make_ladder, make_path,
                    make_random_connected)
from .model import DBGNN, DBGNNConfig, GCNBaseline, gcn_forward, load_checkpoint, save_checkpoint
from .train import TrainConfig, batch_loss, evaluate, grad, make_longrange_task, train

log = logging.getLogger("dbgnn")

MANIFEST_FORMAT = "dbgnn-manifest-v1"
EXIT_OK, EXIT_CLAIM, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- configs

@dataclass(frozen=True)
class GraphSpec:
    family: str = "path"  # path | grid | ladder | random | file
    n: int = 3
    rows: int = 5
    cols: int = 20
    extra_edge_prob: float = 0.15
    seed: int = 0
    file: str | None = None

    def build(self) -> Graph:
        if self.family == "path":
            return make_path(self.n)
        if self.family == "grid":
            return make_grid(self.rows, self.cols)
        if self.family == "ladder":
            return make_ladder(self.n)
        if self.family == "random":
            return make_random_connected(self.n, self.extra_edge_prob, np.random.default_rng(self.seed))
        if self.family == "file":
            if not self.file:
                raise ConfigError("graph family 'file' needs graph.file")
            return load_graph(self.file)
        raise ConfigError(f"unknown graph family {self.family!r}")


@dataclass(frozen=True)
class SpectrumConfig:
    graph: GraphSpec = GraphSpec(family="path", n=2)
    b: float = 1.0
    beta: float = 0.5
    max_size: int = 512


@dataclass(frozen=True)
class SpreadConfig:
    graph: GraphSpec = GraphSpec(family="grid", rows=5, cols=20)
    d_n: int = 4
    d_e: int = 4
    spread: float = 0.1
    oscillatory: bool = True
    seed: int = 0
    steppers: tuple[str, ...] = ("lindb", "db1s", "mpnn_linear", "mpnn_sigma_linear_msg", "mpnn_sigma")
    db1s_activation: str = "relu"
    init: str = "grid_column"  # grid_column | single_node
    T: int = 200  # used unless auto_horizon
    auto_horizon: bool = False
    crossing_factor: float = 1.5  # DB horizon = crossing_factor * num_nodes / |w|
    diffusion_reach: float = 8.0  # MPNN horizon = reach^2 / (2 w^2)
    max_steps: int = 60000
    threshold: float = 0.01
    min_distance: int = 2
    record_every: int = 1
    svg_max_rows: int = 400


@dataclass(frozen=True)
class DirichletConfig:
    graph: GraphSpec = GraphSpec(family="random", n=20, extra_edge_prob=0.1)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hidden: int = 16
    dbgnn_steps: int = 1000
    spread: float = 0.1
    oscillatory: bool = True
    gcn_layers: int = 100
    gcn_spread: float = 0.1
    db_floor: float = 0.05
    gcn_ratio: float = 1e-3
    min_passing: int = 4


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "distance_regression"
    family: str = "path"
    size: int = 32
    n_graphs: int = 32
    seed: int = 0


@dataclass(frozen=True)
class TrainCmdConfig:
    task: TaskSpec = TaskSpec()
    model: DBGNNConfig = DBGNNConfig.desk()
    training: TrainConfig = TrainConfig()
    seed: int = 0
    baseline: bool = False
    de_trace: bool = False
    resume: str | None = None


@dataclass(frozen=True)
class GradcheckConfig:
    graph: GraphSpec = GraphSpec(family="random", n=10, extra_edge_prob=0.2)
    model: DBGNNConfig = DBGNNConfig.desk(d_n_hidden=8, d_e_hidden=8, K=2, T=4, spread=0.3)
    seed: int = 0
    h: float = 1e-5
    rtol: float = 1e-4
    break_adjoint: str | None = None  # negative control: op whose adjoint is replaced by a wrong rule


CONFIGS = {
    "spectrum": SpectrumConfig,
    "spread": SpreadConfig,
    "dirichlet": DirichletConfig,
    "train": TrainCmdConfig,
    "gradcheck": GradcheckConfig,
}

PRESETS: dict[str, dict[str, dict]] = {
    "spectrum": {
        "single_edge": {"graph": {"family": "path", "n": 2}, "b": 1.0, "beta": 0.5},
        "grid": {"graph": {"family": "grid", "rows": 5, "cols": 20}, "b": 1.0, "beta": 0.3},
    },
    "spread": {
        "fig1": {"graph": {"family": "path", "n": 40}, "d_n": 1, "d_e": 1, "spread": 0.03,
                 "oscillatory": True, "steppers": ["lindb", "mpnn_linear"], "init": "single_node",
                 "auto_horizon": True, "record_every": 10},
        "fig3": {"graph": {"family": "grid", "rows": 5, "cols": 20}, "d_n": 4, "d_e": 4, "spread": 0.1,
                 "oscillatory": True, "T": 200},
        "fig5": {"graph": {"family": "grid", "rows": 5, "cols": 20}, "d_n": 4, "d_e": 4, "spread": 0.1,
                 "oscillatory": False, "T": 200},
        "fig6": {"graph": {"family": "ladder", "n": 20}, "d_n": 4, "d_e": 4, "spread": 0.1,
                 "oscillatory": True, "steppers": ["db1s", "mpnn_sigma"], "T": 300},
    },
    "dirichlet": {"fig2": {}},
    "train": {
        "smoke": {"task": {"size": 32, "n_graphs": 32},
                  "training": {"epochs": 200, "batch_size": 11, "max_lr": 3e-3, "final_div": 1e4,
                               "eval_every": 10}},
    },
    "gradcheck": {"default": {}},
}


def _strict(cls, data, where: str):
    """Build a (possibly nested) dataclass from a dict, rejecting unknown keys."""
    if dataclasses.is_dataclass(data):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(hints[name], value, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _strict(tp, value, where)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(_coerce(args[0], v, where) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else copy.deepcopy(v)
    return out


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def resolve_config(sub: str, config_path: str | None, preset: str | None, seed: int | None,
                   overrides: list[str] | None = None):
    cls = CONFIGS[sub]
    # start from the full default config so partial nested overrides keep the field defaults
    data: dict = _jsonable(asdict(cls()))
    if preset is not None:
        if preset not in PRESETS.get(sub, {}):
            raise ConfigError(f"unknown preset {preset!r} for {sub}; known: {sorted(PRESETS.get(sub, {}))}")
        data = _merge(data, PRESETS[sub][preset])
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if isinstance(loaded, dict) and loaded.get("format") == MANIFEST_FORMAT:
            if loaded.get("subcommand") != sub:
                raise ConfigError(f"manifest is for {loaded.get('subcommand')!r}, not {sub!r}")
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        data = _merge(data, loaded)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(data, key, value)
    if seed is not None:
        if "seed" in {f.name for f in dataclasses.fields(cls)}:
            data["seed"] = seed
        elif sub == "dirichlet":
            data["seeds"] = [seed + k for k in range(len(data.get("seeds", DirichletConfig.seeds)))]
    return _strict(cls, data, sub)


# --------------------------------------------------------------- artifacts

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def heatmap_svg(values: np.ndarray, title: str = "", cell: float = 6.0, max_rows: int = 400) -> str:
    """Grayscale heatmap (rows = steps, columns = nodes), black = max, linear scale."""
    values = np.asarray(values, dtype=np.float64)
    stride = max(1, math.ceil(values.shape[0] / max_rows))
    v = values[::stride]
    vmax = v.max(initial=0.0)
    scaled = v / vmax if vmax > 0 else np.zeros_like(v)
    h = max(1.0, cell * min(1.0, 200.0 / max(v.shape[0], 1)))
    width, height = cell * v.shape[1], h * v.shape[0]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height + 20:.1f}">',
           f'<text x="2" y="14" font-size="12" font-family="monospace">{title} (step stride {stride})</text>']
    for i, row in enumerate(scaled):
        for j, a in enumerate(row):
            level = int(round(255 * (1.0 - a)))
            out.append(f'<rect x="{j * cell:.1f}" y="{20 + i * h:.2f}" width="{cell:.1f}" height="{h:.2f}" '
                       f'fill="rgb({level},{level},{level})"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_manifest(out: Path, sub: str, config, artifacts: list[str], extra: dict | None = None) -> None:
    hashes = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in sorted(artifacts)}
    manifest = {
        "format": MANIFEST_FORMAT,
        "subcommand": sub,
        "config": _jsonable(asdict(config)),
        "seed": getattr(config, "seed", None) if not isinstance(config, DirichletConfig) else list(config.seeds),
        "artifacts": hashes,
        "results": _jsonable(extra or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DBGNN_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------- subcommands

def cmd_spectrum(cfg: SpectrumConfig, out: Path) -> tuple[int, dict]:
    g = cfg.graph.build()
    op = dirac.assemble(g, cfg.b, cfg.beta)
    spec = dirac.eigendecompose(op, max_size=cfg.max_size)
    rep = dirac.verify_spectral_claims(spec, cfg.beta, g.num_nodes, g.num_edges)
    res = dirac.residuals(op, spec)
    write_csv(out / "spectrum.csv", ["index", "eigenvalue"], enumerate(spec.eigenvalues))
    result = {**asdict(rep), "max_residual": float(res.max()), "n_nodes": g.num_nodes, "n_edges": g.num_edges}
    write_manifest(out, "spectrum", cfg, ["spectrum.csv"], result)
    gated = cfg.beta != 0.0
    ok = (rep.gap_holds or not gated) and res.max() < 1e-8
    return (EXIT_OK if ok else EXIT_CLAIM), result


def spread_horizon(cfg: SpreadConfig, kind: str, w: dynamics.DBWeights, n_nodes: int) -> int:
    """Number of steps for one stepper; ``auto_horizon`` scales it to the weight magnitude."""
    if not cfg.auto_horizon:
        return cfg.T
    scale = float(np.abs(w.W_en).max())
    if scale == 0.0:
        return cfg.max_steps
    if kind.startswith("mpnn"):
        steps = cfg.diffusion_reach ** 2 / (2.0 * scale ** 2)
    else:
        steps = cfg.crossing_factor * n_nodes / scale
    return int(min(cfg.max_steps, max(1, math.ceil(steps))))


def run_spread(cfg: SpreadConfig) -> dict[str, dict]:
    """Evolve every requested stepper from the same weights and initial state."""
    g = cfg.graph.build()
    rng = np.random.default_rng(cfg.seed)
    w = dynamics.init_weights(cfg.d_n, cfg.d_e, cfg.spread, cfg.oscillatory, rng)
    if cfg.init == "grid_column":
        s0 = dynamics.spreading_initial_state(g, cfg.d_n, cfg.d_e, rng)
        sources = np.arange(g.grid_shape[0]) * g.grid_shape[1]
    elif cfg.init == "single_node":
        s0 = dynamics.single_node_state(g, cfg.d_n, cfg.d_e, rng, node=0)
        sources = np.array([0])
    else:
        raise ConfigError(f"unknown init {cfg.init!r}")
    dist = np.min(np.stack([g.distances_from(int(s)) for s in sources]), axis=0)

    def one(kind):
        T = spread_horizon(cfg, kind, w, g.num_nodes)
        kw = {"activation": cfg.db1s_activation} if kind == "db1s" else {}
        traj = dynamics.evolve(g, kind, w, s0, T, **kw)
        arr = metrics.front_arrival(traj, cfg.threshold)
        slope = metrics.arrival_slope(arr, dist, cfg.min_distance)
        return kind, {"T": T, "traj": traj, "arrival": arr, "slope": slope,
                      "reached": int(np.sum(arr != metrics.NOT_REACHED))}

    return dict(_pmap(one, list(cfg.steppers)))


def cmd_spread(cfg: SpreadConfig, out: Path) -> tuple[int, dict]:
    for k in cfg.steppers:
        if k not in dynamics.STEPPERS:
            raise ConfigError(f"unknown stepper {k!r}")
    runs = run_spread(cfg)
    artifacts = []
    summary = []
    for kind, r in runs.items():
        act = r["traj"].activation
        steps = range(0, act.shape[0], cfg.record_every)
        rows = ((t, v, act[t, v]) for t in steps for v in range(act.shape[1]))
        write_csv(out / f"spread_{kind}.csv", ["step", "node_id", "activation"], rows)
        (out / f"spread_{kind}.svg").write_text(heatmap_svg(act, kind, max_rows=cfg.svg_max_rows))
        artifacts += [f"spread_{kind}.csv", f"spread_{kind}.svg"]
        summary.append((kind, r["T"], r["slope"], r["reached"]))
    write_csv(out / "spread_summary.csv", ["stepper", "steps", "arrival_slope", "nodes_reached"], summary)
    artifacts.append("spread_summary.csv")
    result = {k: {"steps": T, "arrival_slope": s, "nodes_reached": n} for k, T, s, n in summary}
    write_manifest(out, "spread", cfg, artifacts, result)
    return EXIT_OK, result


def dirichlet_run(cfg: DirichletConfig, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """DE per step of an untrained 1-block DBGNN and per layer of a GCN for one seed."""
    rng = np.random.default_rng(seed)
    g = cfg.graph.build() if cfg.graph.family != "random" else dataclasses.replace(cfg.graph, seed=seed).build()
    x_in = rng.choice([-1.0, 1.0], size=(g.num_nodes, 1))
    mcfg = DBGNNConfig(d_n_hidden=cfg.hidden, d_e_hidden=cfg.hidden, K=1, T=cfg.dbgnn_steps,
                       node_dropout=0.0, edge_dropout=0.0, spread=cfg.spread, oscillatory_init=cfg.oscillatory)
    model = DBGNN.init(mcfg, rng)
    states = []
    model.forward(g, x_in, np.ones((g.num_directed, 1)), on_step=lambda t, x: states.append(x) if t > 0 else None)
    db = metrics.dirichlet_series(g, states)
    gcn = GCNBaseline.init(1, cfg.hidden, cfg.gcn_layers, cfg.gcn_spread, rng)
    gc = metrics.dirichlet_series(g, gcn_forward(gcn, g, x_in))
    return db.values, gc.values, gc.degenerate


def cmd_dirichlet(cfg: DirichletConfig, out: Path) -> tuple[int, dict]:
    runs = _pmap(lambda s: (s, dirichlet_run(cfg, s)), list(cfg.seeds))
    db_rows, gcn_rows = [], []
    db_ok, gcn_ok = 0, 0
    per_seed = {}
    for seed, (db, gc, degen) in runs:
        db_rows += [(t + 1, v, seed) for t, v in enumerate(db)]
        gcn_rows += [(t + 1, v, seed) for t, v in enumerate(gc)]
        d_pass = bool(np.all(db > cfg.db_floor))
        g_pass = bool(gc[-1] < cfg.gcn_ratio * gc[0] and not degen[-1])
        db_ok += d_pass
        gcn_ok += g_pass
        per_seed[str(seed)] = {"dbgnn_min_de": float(db.min()), "gcn_first": float(gc[0]),
                               "gcn_last": float(gc[-1]), "dbgnn_pass": d_pass, "gcn_pass": g_pass}
    write_csv(out / "dirichlet_dbgnn.csv", ["step", "dirichlet_energy", "seed"], db_rows)
    write_csv(out / "dirichlet_gcn.csv", ["step", "dirichlet_energy", "seed"], gcn_rows)
    result = {"dbgnn_passing": db_ok, "gcn_passing": gcn_ok, "per_seed": per_seed}
    write_manifest(out, "dirichlet", cfg, ["dirichlet_dbgnn.csv", "dirichlet_gcn.csv"], result)
    ok = db_ok >= cfg.min_passing and gcn_ok >= cfg.min_passing
    return (EXIT_OK if ok else EXIT_CLAIM), result


def cmd_train(cfg: TrainCmdConfig, out: Path) -> tuple[int, dict]:
    task = make_longrange_task(cfg.task.kind, cfg.task.family, cfg.task.size, cfg.task.n_graphs, cfg.task.seed)
    if cfg.resume:
        model, _ = load_checkpoint(cfg.resume)
        if model.config != cfg.model:
            raise ConfigError("checkpoint model config differs from config.model")
    else:
        model = DBGNN.init(cfg.model, cfg.seed)
    tcfg = dataclasses.replace(cfg.training, seed=cfg.seed)
    artifacts = []
    result: dict = {}
    if tcfg.epochs > 0:
        rep = train(model, task, tcfg)
        write_csv(out / "train_report.csv", ["epoch", "train_loss", "val_loss", "metric", "lr"], rep.csv_rows())
        artifacts.append("train_report.csv")
        best = DBGNN(model.config, rep.best_params)
        result.update(rep.final)
        result["best_epoch"] = rep.best_epoch
    else:
        best = model
        for split in ("train", "val", "test"):
            result.update({f"{split}_{k}": v for k, v in evaluate(best, task, split, tcfg.loss).items()})
    save_checkpoint(out / "checkpoint.npz", best, {"task": asdict(cfg.task), "results": _jsonable(result)})
    write_csv(out / "final_metrics.csv", ["name", "value"], sorted(result.items()))
    artifacts.append("final_metrics.csv")
    if cfg.baseline:
        bcfg = dataclasses.replace(cfg.model, layer_kind="mpnn_sigma")
        brep = train(DBGNN.init(bcfg, cfg.seed), task, tcfg)
        result["baseline_val_r2"] = brep.final["val_r2"]
        result["baseline_test_r2"] = brep.final["test_r2"]
        write_csv(out / "baseline_report.csv", ["epoch", "train_loss", "val_loss", "metric", "lr"], brep.csv_rows())
        artifacts.append("baseline_report.csv")
    if cfg.de_trace:
        b = task.batch(task.splits["test"][:1] if len(task.splits["test"]) else [0])
        xs = []
        best.forward(b.graph, b.node_in, b.edge_in, on_step=lambda t, x: xs.append(x))
        de = metrics.dirichlet_series(b.graph, xs)
        write_csv(out / "de_trace.csv", ["step", "dirichlet_energy", "seed"],
                  [(t, v, cfg.seed) for t, v in enumerate(de.values)])
        artifacts.append("de_trace.csv")
    write_manifest(out, "train", cfg, artifacts, result)
    return EXIT_OK, result


def gradcheck(cfg: GradcheckConfig) -> list[tuple[str, float, bool]]:
    """Compare tape gradients with central differences for every parameter block."""
    rng = np.random.default_rng(cfg.seed)
    g = cfg.graph.build()
    model = DBGNN.init(cfg.model, rng)
    from .train import Batch

    b = Batch(g, rng.normal(size=(g.num_nodes, cfg.model.d_n_in)),
              rng.normal(size=(g.num_directed, cfg.model.d_e_in)),
              rng.normal(size=(g.num_nodes, cfg.model.d_out)), np.zeros(g.num_nodes, dtype=np.int64))
    if cfg.model.pooling == "mean":
        b.target = rng.normal(size=(1, cfg.model.d_out))
    adjoints = None
    if cfg.break_adjoint is not None:
        if cfg.break_adjoint not in autodiff.ADJOINTS:
            raise ConfigError(f"unknown op {cfg.break_adjoint!r}")
        adjoints = dict(autodiff.ADJOINTS)
        good = adjoints[cfg.break_adjoint]
        adjoints[cfg.break_adjoint] = lambda gr, v, o, c: tuple(1.5 * a for a in good(gr, v, o, c))
    grads, _ = grad(model, b, adjoints=adjoints)
    rows = []
    for name, p in model.params.items():
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + cfg.h
            lp = batch_loss(model, b)
            p[idx] = old - cfg.h
            lm = batch_loss(model, b)
            p[idx] = old
            fd[idx] = (lp - lm) / (2 * cfg.h)
        denom = max(np.linalg.norm(fd), np.linalg.norm(grads[name]))
        rel = float(np.linalg.norm(grads[name] - fd) / denom) if denom > 0 else 0.0
        rows.append((name, rel, rel < cfg.rtol))
    return rows


def cmd_gradcheck(cfg: GradcheckConfig, out: Path) -> tuple[int, dict]:
    rows = gradcheck(cfg)
    write_csv(out / "gradcheck.csv", ["block", "rel_error", "passed"], rows)
    result = {"blocks": len(rows), "failed": [n for n, _, ok in rows if not ok],
              "max_rel_error": max(r for _, r, _ in rows)}
    write_manifest(out, "gradcheck", cfg, ["gradcheck.csv"], result)
    return (EXIT_OK if not result["failed"] else EXIT_CLAIM), result


COMMANDS = {
    "spectrum": cmd_spectrum,
    "spread": cmd_spread,
    "dirichlet": cmd_dirichlet,
    "train": cmd_train,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbgnn", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
        sp.add_argument("--preset", help=f"named preset: {', '.join(sorted(PRESETS.get(name, {})))}")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=f"runs/{name}")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (dotted path, JSON value)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args.command, args.config, args.preset, args.seed, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(over="ignore", invalid="ignore"):
            # overflow is detected and reported as NumericOverflow by the steppers
            code, result = COMMANDS[args.command](cfg, out)
    except (ConfigError, GraphError) as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    except (dynamics.NumericOverflow, dirac.NumericFailure, autodiff.NumericFailure, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    log.info(json.dumps(_jsonable(result), indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
