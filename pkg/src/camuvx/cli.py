"""Command-line entry point: ``camuvx generate | discover | evaluate | experiment``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .discovery import DiscoveryResult, SearchConfig, cam_uv, cam_uvx
from .engines import OracleEngine, SampleEngine
from .evaluation import CSV_FIELDS, score_adjacency, score_ancestors
from .experiments import METHODS, ExperimentConfig, preset, read_rows, run_experiments, summarise_targets
from .fixtures import FIXTURES, load_fixture
from .graph import CausalGraph
from .synth import make_scm_spec, read_csv, sample_ba_graph, sample_dataset, sample_er_graph_with_hidden


class CliError(Exception):
    pass


def read_mask(path: str | Path, p: int) -> np.ndarray:
    """Parse a ``p x p`` 0/1 forbidden-parent mask (JSON list or comma/space separated rows).

    Row ``i`` lists the columns that may not be parents of ``x_i``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        lines = [(k + 1, [str(v) for v in r]) for k, r in enumerate(rows)]
    else:
        lines = []
        for ln, line in enumerate(text.splitlines(), start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                lines.append((ln, line.replace(",", " ").split()))
    if len(lines) != p:
        raise CliError(f"{path}: mask has {len(lines)} rows, data has {p} columns")
    mask = np.zeros((p, p), dtype=bool)
    for i, (ln, cells) in enumerate(lines):
        if len(cells) != p:
            raise CliError(f"{path}:{ln}: expected {p} entries, found {len(cells)}")
        for j, c in enumerate(cells):
            if c not in ("0", "1", "True", "False", "true", "false"):
                raise CliError(f"{path}:{ln}:{j + 1}: mask entries must be 0 or 1, got {c!r}")
            mask[i, j] = c in ("1", "True", "true")
    np.fill_diagonal(mask, False)
    return mask


def _graph_for(args, seed: int) -> CausalGraph:
    if args.generator == "ba":
        return sample_ba_graph(args.n_nodes, args.children, args.n_observed, seed)
    if args.generator == "er":
        return sample_er_graph_with_hidden(args.n_observed, args.edge_prob, args.confounders, args.mediators, seed)
    return load_fixture(args.fixture)


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for g in range(args.n_graphs):
        seed = args.seed + g
        graph = _graph_for(args, seed)
        data = sample_dataset(make_scm_spec(graph, seed), args.n_samples)
        graph.save(out / f"graph_{seed}.json")
        data.save(out / f"data_{seed}.csv")
        print(out / f"data_{seed}.csv")
    return 0


def _search_config(args, p: int, oracle: bool) -> SearchConfig:
    mask = read_mask(args.forbid, p) if args.forbid else None
    d = args.max_parents if args.max_parents is not None else (p if oracle else 3)
    return SearchConfig(alpha=args.alpha, max_parents=d, ci_test=args.ci_test, forbidden=mask, seed=args.seed)


def cmd_discover(args) -> int:
    if args.engine == "oracle":
        if not args.graph:
            raise CliError("--engine oracle needs --graph")
        graph = CausalGraph.load(args.graph)
        engine = OracleEngine(graph)
        labels = tuple(graph.label(v) for v in graph.observed)
        stem = Path(args.graph).stem
    else:
        if not args.data:
            raise CliError("--engine sample needs a data CSV")
        labels, values = read_csv(args.data)
        engine = SampleEngine(values, seed=args.seed, ci_test=args.ci_test)
        stem = Path(args.data).stem
    cfg = _search_config(args, engine.p, args.engine == "oracle")
    if args.method == "cam_uv":
        a = cam_uv(engine, cfg)
        res = DiscoveryResult(a, a.copy(), *[[set() for _ in range(engine.p)] for _ in range(3)], a.copy(), labels)
    else:
        res = cam_uvx(engine, cfg, cold_start=args.method == "cam_uvx_coldstart", labels=labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}_{args.method}.json"
    res.save(path)
    print(path)
    return 0


def cmd_evaluate(args) -> int:
    truth = CausalGraph.load(args.graph)
    rows = []
    for rpath in args.result:
        res = DiscoveryResult.load(rpath)
        for rep in (
            score_adjacency(res.A, truth, "half"),
            score_adjacency(res.A, truth, "strict"),
            score_ancestors(res, truth, "half"),
            score_ancestors(res, truth, "strict"),
        ):
            rows.append({"result": str(rpath), **rep.row()})
    fields = ("result", *CSV_FIELDS)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([r[f] for f in fields])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "evaluation.csv", "w", newline="", encoding="utf-8") as fh:
            fw = csv.writer(fh, lineterminator="\n")
            fw.writerow(fields)
            for r in rows:
                fw.writerow([r[f] for f in fields])
    return 0


def cmd_experiment(args) -> int:
    if args.preset:
        configs = preset(args.preset, seed=args.seed)
        overrides = {}
        if args.n_graphs is not None:
            overrides["n_graphs"] = args.n_graphs
        if args.alpha_list:
            overrides["alphas"] = tuple(args.alpha_list)
        if args.methods:
            overrides["methods"] = tuple(args.methods)
        if args.engine != "sample":
            overrides["engine"] = args.engine
        if overrides:
            configs = [ExperimentConfig(**{**c.__dict__, **overrides}) for c in configs]
    else:
        if args.generator == "ba":
            params = {"n_nodes": args.n_nodes, "children": args.children, "n_observed": args.n_observed}
        elif args.generator == "er":
            params = {
                "n_observed": args.n_observed,
                "edge_prob": args.edge_prob,
                "n_confounders": args.confounders,
                "n_mediators": args.mediators,
            }
        else:
            params = {"name": args.fixture}
        configs = [
            ExperimentConfig(
                args.generator,
                params,
                n_graphs=1 if args.n_graphs is None else args.n_graphs,
                n_samples=args.n_samples,
                alphas=tuple(args.alpha_list or (0.1,)),
                methods=tuple(args.methods or ("cam_uv", "cam_uvx")),
                engine=args.engine,
                seed=args.seed,
                max_parents=args.max_parents or 3,
                ci_test=args.ci_test,
            )
        ]
    paths = run_experiments(configs, args.out, jobs=args.jobs)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    if "targets" in paths:
        for r in summarise_targets(read_rows(paths["targets"])):
            print(f"  {r['fixture']:6s} {r['method']:18s} alpha={r['alpha']:<5} {r['target']:20s} {r['success_rate']:.2f}")
    return 0


def _add_generator_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--generator", choices=("ba", "er", "fixture"), default="fixture")
    p.add_argument("--fixture", choices=FIXTURES, default="fig1a")
    p.add_argument("--n-nodes", type=int, default=40)
    p.add_argument("--children", type=int, default=5)
    p.add_argument("--n-observed", type=int, default=10)
    p.add_argument("--edge-prob", type=float, default=0.2)
    p.add_argument("--confounders", type=int, default=20)
    p.add_argument("--mediators", type=int, default=20)
    p.add_argument("--n-samples", type=int, default=500)


def _add_search_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-parents", type=int, default=None, help="subset-size cap d (default 3, or p for the oracle)")
    p.add_argument("--ci-test", choices=("knn",), default="knn")
    p.add_argument("--engine", choices=("sample", "oracle"), default="sample")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (non-negative)")
    parser = argparse.ArgumentParser(prog="camuvx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample graphs and datasets")
    _add_generator_args(g)
    g.add_argument("--n-graphs", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discover", parents=[common], help="run a search on one dataset (or a graph, with the oracle)")
    d.add_argument("data", nargs="?", help="dataset CSV")
    d.add_argument("--graph", help="graph JSON for --engine oracle")
    d.add_argument("--method", choices=METHODS, default="cam_uvx")
    d.add_argument("--alpha", type=float, default=0.1)
    d.add_argument("--forbid", help="p x p 0/1 mask; row i forbids parents of x_i")
    _add_search_args(d)
    d.add_argument("--out", default=".")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("evaluate", parents=[common], help="score result files against a graph")
    e.add_argument("result", nargs="+")
    e.add_argument("--graph", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("experiment", parents=[common], help="run an experiment grid into CSV tables")
    x.add_argument("--preset", choices=("fig2", "ba-desk", "er-desk"))
    _add_generator_args(x)
    _add_search_args(x)
    x.add_argument("--alpha", dest="alpha_list", type=float, action="append", help="repeatable")
    x.add_argument("--method", dest="methods", choices=METHODS, action="append", help="repeatable")
    x.add_argument("--n-graphs", type=int, default=None)
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0:
        parser.error("--seed must be non-negative")
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"camuvx: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
