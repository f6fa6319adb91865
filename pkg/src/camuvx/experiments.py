"""Experiment loops: graph seeds x methods x alpha, scored into tidy CSV rows.

Every run is a pure function of its config and seed, so output files are
byte-identical across reruns. Rows carry the config digest and library
versions for provenance; wall-clock times are deliberately left out.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .discovery import DiscoveryResult, SearchConfig, cam_uv, cam_uvx
from .engines import OracleEngine, SampleEngine
from .evaluation import CSV_FIELDS, predicted_ancestors, score_adjacency, score_ancestors
from .fixtures import load_fixture
from .graph import CausalGraph
from .synth import make_scm_spec, sample_ba_graph, sample_dataset, sample_er_graph_with_hidden

METHODS = ("cam_uv", "cam_uvx", "cam_uvx_coldstart")
GENERATORS = ("ba", "er", "fixture")

ROW_FIELDS = (
    "config",
    "generator",
    "graph_seed",
    "engine",
    "method",
    "alpha",
    *CSV_FIELDS,
    "status",
    "error",
    "versions",
)
TARGET_FIELDS = ("config", "fixture", "graph_seed", "method", "alpha", "target", "hit", "status")

# per-fixture success targets: name -> predicate(adjacency, positive-ancestor matrix)
FIXTURE_TARGETS = {
    "fig1a": {
        "edge_x1_x2": lambda a, anc: a[1, 0] == 1.0 and a[0, 1] == 0.0,
        "x3_ancestor_of_x2": lambda a, anc: bool(anc[1, 2]),
    },
    "fig1b": {
        "nonedge_x1_x2": lambda a, anc: a[1, 0] == 0.0 and a[0, 1] == 0.0,
    },
}


def _versions() -> str:
    import numba
    import scipy

    return f"camuvx={__version__};numpy={np.__version__};scipy={scipy.__version__};numba={numba.__version__}"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid.

    Attributes
    ----------
    generator : {"ba", "er", "fixture"}
    params : dict
        Generator arguments (``n_nodes``, ``children``, ``n_observed`` for BA;
        ``n_observed``, ``edge_prob``, ``n_confounders``, ``n_mediators`` for ER;
        ``name`` for a fixture).
    n_graphs : int
        Graph seeds ``seed .. seed + n_graphs - 1``. Zero gives an empty table.
    """

    generator: str
    params: dict = field(default_factory=dict)
    n_graphs: int = 1
    n_samples: int = 500
    alphas: tuple[float, ...] = (0.1,)
    methods: tuple[str, ...] = ("cam_uv", "cam_uvx")
    engine: str = "sample"
    seed: int = 0
    max_parents: int = 3
    ci_test: str = "knn"
    name: str = ""

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.n_graphs < 0 or self.n_samples < 1 or self.max_parents < 1:
            raise ValueError("n_graphs must be >= 0, n_samples and max_parents >= 1")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("alpha values must lie in (0, 1)")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.engine not in ("sample", "oracle"):
            raise ValueError("engine must be 'sample' or 'oracle'")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        d["methods"] = list(self.methods)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def preset(name: str, seed: int = 0) -> list[ExperimentConfig]:
    """Desk-scale versions of the published protocols."""
    if name == "fig2":
        return [
            ExperimentConfig("fixture", {"name": f}, n_graphs=100, seed=seed, name=f"fig2-{f}")
            for f in ("fig1a", "fig1b")
        ]
    if name == "ba-desk":
        p = {"n_nodes": 40, "children": 5, "n_observed": 10}
        return [ExperimentConfig("ba", p, n_graphs=10, seed=seed, name="ba-desk")]
    if name == "er-desk":
        p = {"n_observed": 10, "edge_prob": 0.2, "n_confounders": 20, "n_mediators": 20}
        return [ExperimentConfig("er", p, n_graphs=10, seed=seed, name="er-desk")]
    raise ValueError(f"unknown preset {name!r}; choose fig2, ba-desk or er-desk")


def build_graph(cfg: ExperimentConfig, graph_seed: int) -> CausalGraph:
    p = cfg.params
    if cfg.generator == "ba":
        return sample_ba_graph(int(p["n_nodes"]), int(p["children"]), int(p["n_observed"]), graph_seed)
    if cfg.generator == "er":
        return sample_er_graph_with_hidden(
            int(p["n_observed"]),
            float(p["edge_prob"]),
            int(p["n_confounders"]),
            int(p["n_mediators"]),
            graph_seed,
        )
    return load_fixture(str(p["name"]))


def run_methods(engine, methods: Sequence[str], cfg: SearchConfig) -> dict[str, DiscoveryResult | np.ndarray]:
    """Run the requested methods on one engine, sharing the CAM-UV pass."""
    out: dict[str, DiscoveryResult | np.ndarray] = {}
    a0 = None
    if "cam_uv" in methods or "cam_uvx" in methods:
        a0 = cam_uv(engine, cfg)
    for m in methods:
        if m == "cam_uv":
            out[m] = a0
        elif m == "cam_uvx":
            out[m] = cam_uvx(engine, cfg, initial=a0)
        else:
            out[m] = cam_uvx(engine, cfg, cold_start=True)
    return out


def _adjacency(res) -> np.ndarray:
    return res.A if isinstance(res, DiscoveryResult) else res


def _cell(args: tuple[ExperimentConfig, int, float]) -> tuple[list[dict], list[dict]]:
    cfg, graph_seed, alpha = args
    base = {
        "config": cfg.digest(),
        "generator": cfg.generator,
        "graph_seed": graph_seed,
        "engine": cfg.engine,
        "alpha": alpha,
        "versions": _versions(),
    }
    rows: list[dict] = []
    targets: list[dict] = []
    fixture = cfg.params.get("name") if cfg.generator == "fixture" else None
    try:
        graph = build_graph(cfg, graph_seed)
        if cfg.engine == "oracle":
            engine = OracleEngine(graph)
            p = len(graph.observed)
            search = SearchConfig(alpha=alpha, max_parents=p, ci_test=cfg.ci_test, seed=graph_seed)
        else:
            data = sample_dataset(make_scm_spec(graph, graph_seed), cfg.n_samples)
            engine = SampleEngine(data.values, seed=graph_seed, ci_test=cfg.ci_test)
            search = SearchConfig(alpha=alpha, max_parents=cfg.max_parents, ci_test=cfg.ci_test, seed=graph_seed)
        results = run_methods(engine, cfg.methods, search)
    except Exception as exc:  # recorded, the loop goes on
        for m in cfg.methods:
            rows.append({**base, "method": m, "status": "error", "error": f"{type(exc).__name__}: {exc}"})
        return rows, targets

    for m in cfg.methods:
        res = results[m]
        reports = [
            score_adjacency(_adjacency(res), graph, "half"),
            score_adjacency(_adjacency(res), graph, "strict"),
            score_ancestors(res, graph, "half"),
            score_ancestors(res, graph, "strict"),
        ]
        for r in reports:
            rows.append({**base, "method": m, **r.row(), "status": "ok", "error": ""})
        if fixture in FIXTURE_TARGETS:
            pos, _ = predicted_ancestors(res)
            a = _adjacency(res)
            for t, pred in FIXTURE_TARGETS[fixture].items():
                targets.append(
                    {
                        "config": base["config"],
                        "fixture": fixture,
                        "graph_seed": graph_seed,
                        "method": m,
                        "alpha": alpha,
                        "target": t,
                        "hit": int(bool(pred(a, pos))),
                        "status": "ok",
                    }
                )
    return rows, targets


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _write(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def summarise_metrics(rows: Sequence[dict]) -> list[dict]:
    """Mean precision / recall / F1 per (config, method, alpha, task, mode)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r.get("status") != "ok":
            continue
        groups.setdefault((r["config"], r["method"], r["alpha"], r["task"], r["mode"]), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        g = groups[key]
        out.append(
            {
                "config": key[0],
                "method": key[1],
                "alpha": key[2],
                "task": key[3],
                "mode": key[4],
                "n": len(g),
                "precision": float(np.mean([r["precision"] for r in g])),
                "recall": float(np.mean([r["recall"] for r in g])),
                "f1": float(np.mean([r["f1"] for r in g])),
            }
        )
    return out


def summarise_targets(targets: Sequence[dict]) -> list[dict]:
    """Success rate per (fixture, method, alpha, target)."""
    groups: dict[tuple, list[int]] = {}
    for t in targets:
        groups.setdefault((t["fixture"], t["method"], t["alpha"], t["target"]), []).append(int(t["hit"]))
    return [
        {"fixture": k[0], "method": k[1], "alpha": k[2], "target": k[3], "n": len(v), "success_rate": sum(v) / len(v)}
        for k, v in sorted(groups.items(), key=lambda kv: tuple(str(x) for x in kv[0]))
    ]


SUMMARY_FIELDS = ("config", "method", "alpha", "task", "mode", "n", "precision", "recall", "f1")
SUCCESS_FIELDS = ("fixture", "method", "alpha", "target", "n", "success_rate")


def run_experiments(configs: Sequence[ExperimentConfig], out_dir: str | Path, jobs: int = 1) -> dict[str, Path]:
    """Run every cell of every config and write the CSV tables into ``out_dir``.

    Returns the written paths keyed by table name. ``metrics.csv`` always
    exists (header only when there is nothing to run).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(c, c.seed + g, a) for c in configs for g in range(c.n_graphs) for a in c.alphas]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    rows = [r for rs, _ in results for r in rs]
    targets = [t for _, ts in results for t in ts]

    paths = {"metrics": out / "metrics.csv", "summary": out / "summary.csv", "config": out / "config.json"}
    _write(paths["metrics"], ROW_FIELDS, rows)
    _write(paths["summary"], SUMMARY_FIELDS, summarise_metrics(rows))
    if targets:
        paths["targets"] = out / "targets.csv"
        paths["success"] = out / "success.csv"
        _write(paths["targets"], TARGET_FIELDS, targets)
        _write(paths["success"], SUCCESS_FIELDS, summarise_targets(targets))
    cfg_doc = {"configs": [dict(c.to_dict(), digest=c.digest()) for c in configs]}
    paths["config"].write_text(json.dumps(cfg_doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_rows(path: str | Path) -> list[dict]:
    """Load a table written by :func:`run_experiments` with numeric fields parsed."""
    numeric = {"tp", "fp", "tn", "fn", "precision", "recall", "f1", "alpha", "success_rate"}
    ints = {"graph_seed", "n_unknown", "n", "hit"}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            for k, v in r.items():
                if v == "":
                    continue
                if k in numeric:
                    r[k] = float(v)
                elif k in ints:
                    r[k] = int(v)
            rows.append(r)
    return rows


__all__ = [
    "ExperimentConfig",
    "FIXTURE_TARGETS",
    "METHODS",
    "ROW_FIELDS",
    "build_graph",
    "preset",
    "read_rows",
    "run_experiments",
    "run_methods",
    "summarise_metrics",
    "summarise_targets",
]
