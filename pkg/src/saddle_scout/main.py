#!/usr/bin/env python3
"""
Saddle Scout - Main Entry Point

    saddle_scout run <config> [--output DIR] [--seed S] [--parallelism P] [--log-level L]
    saddle_scout classify <solution-file> [--config CFG]
    saddle_scout graph <landscape.json> [--output FILE]

Exit codes: 0 success, 2 configuration error, 3 solver or I/O failure.
"""

import argparse
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np

from saddle_scout import __version__, artifacts
from saddle_scout.config import RunConfig, SEARCH_FIELDS, load_config
from saddle_scout.dynamics import SearchConfig, riemannian_gradient
from saddle_scout.errors import ConfigError, SaddleScoutError
from saddle_scout.landscape import Landscape, LandscapeBuilder, StationaryPoint
from saddle_scout.problems.base import BaseProblem
from saddle_scout.problems.bec import BecProblem, load_field
from saddle_scout.problems.problem_registry import get_registry

logger = logging.getLogger('SaddleScout.CLI')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'


def configure_logging(output_dir: Optional[str], level: str) -> Optional[logging.Handler]:
    """Root logging to stderr and <output>/logs/saddle_scout.log; returns the file handler"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    file_handler = None
    if output_dir:
        os.makedirs(os.path.join(output_dir, "logs"), exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(output_dir, "logs", "saddle_scout.log"))
        handlers.insert(0, file_handler)
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, handlers=handlers, force=True)
    return file_handler


def search_config(problem: BaseProblem, cfg: RunConfig) -> SearchConfig:
    """Problem defaults overlaid with the [search] section"""
    values = {k: v for k, v in problem.default_search().items() if k in SEARCH_FIELDS}
    values.update(cfg.search_fields())
    return SearchConfig(**values)


def make_builder(problem: BaseProblem, cfg: RunConfig):
    defaults = problem.default_search()
    opts = dict(defaults)
    opts.update(cfg.search)
    try:
        search = search_config(problem, cfg)
    except ValueError as e:
        raise ConfigError("search", str(e))
    chart = problem.build_chart(search.retraction, search.transport)
    builder = LandscapeBuilder(
        problem, chart, search,
        eps=opts.get("eps", 1e-2),
        k_max=opts.get("k_max", 4),
        depth_cap=opts.get("depth_cap"),
        seed=cfg.seed,
        eig_method=opts.get("eig_method"),
        eig_tol=opts.get("eig_tol", 1e-8),
        zero_tol=opts.get("zero_tol", 1e-4),
        parallelism=cfg.parallelism,
        upward_schedule=opts.get("upward_schedule", "zero-mode"),
        upward_signs=opts.get("upward_signs", "both"),
    )
    return builder, opts


def _seed_point(builder: LandscapeBuilder, x0: np.ndarray, opts: Dict[str, Any]) -> Optional[StationaryPoint]:
    """Use x0 directly when it is already stationary, otherwise converge to a saddle first"""
    gnorm = builder.chart.space.norm(riemannian_gradient(builder.problem, builder.chart, x0))
    if gnorm <= builder.search.grad_tol:
        return builder.make_point(x0)
    _, point = builder.find_saddle(x0, opts.get("target_index", 0))
    return point


def execute(cfg: RunConfig, problem: BaseProblem) -> Landscape:
    """Run the configured mode and return the landscape (raises SaddleScoutError on failure)"""
    builder, opts = make_builder(problem, cfg)
    x0 = problem.initial_point(opts.get("start"))
    builder.chart.check_feasible(x0)

    if cfg.mode == "single-saddle":
        outcome, point = builder.find_saddle(x0, opts.get("target_index", 1))
        if point is None:
            raise SaddleScoutError(f"saddle search ended with status {outcome.status.value}")
        return builder.seed_landscape(point)

    if cfg.mode == "downward":
        seed = _seed_point(builder, x0, opts)
        if seed is None:
            raise SaddleScoutError("could not converge to a seed saddle")
        return builder.downward_search(seed)

    outcome, ground = builder.relax(x0)
    if ground is None:
        raise SaddleScoutError(f"relaxation to a minimum ended with status {outcome.status.value}")
    land = builder.seed_landscape(ground)
    builder.upward_search(ground, land)
    return land


def write_outputs(land: Landscape, problem: BaseProblem, output_dir: str) -> List[str]:
    sol_dir = os.path.join(output_dir, "solutions")
    os.makedirs(sol_dir, exist_ok=True)
    for point in land.solutions:
        stem = f"solution_{point.id:03d}"
        paths = problem.export_solution(point.x, sol_dir, stem)
        if not paths:
            path = os.path.join(sol_dir, stem + ".json")
            artifacts.write_json(path, {"id": point.id, "energy": point.energy, "index": point.index,
                                        "coordinates": problem.solution_payload(point.x)})
            paths = {"coordinates": path}
        point.artifacts = {k: os.path.relpath(v, output_dir) for k, v in paths.items()}

    artifacts.write_json(os.path.join(output_dir, "landscape.json"), land.to_dict(problem))
    artifacts.emit_graph(land, os.path.join(output_dir, "landscape.dot"))
    states = []
    for p in land.solutions:
        entry = {"id": p.id, "energy": p.energy, "index": p.index, "n_zero": p.n_zero,
                 "grad_norm": p.grad_norm}
        entry.update(p.summary)
        states.append(entry)
    report = {"problem": problem.describe(), "states": states,
              "relations": [list(r) for r in land.relations],
              "ascents": [list(a) for a in land.ascents],
              "near_misses": len(land.near_misses), "failed_branches": len(land.failures)}
    artifacts.write_json(os.path.join(output_dir, "report.json"), report)
    return ["landscape.json", "landscape.dot", "report.json", "solutions"]


def print_report(land: Landscape):
    print("\n" + "=" * 60)
    print(f"[Landscape] {len(land.solutions)} solutions, {len(land.relations)} relations, "
          f"{len(land.ascents)} ascents")
    print("=" * 60)
    for p in land.solutions:
        print(f"[Landscape] #{p.id}: index={p.index} zero={p.n_zero} E={p.energy:.10f}")
    for parent, child in land.relations:
        print(f"[Landscape] {parent} -> {child}")
    if land.failures:
        print(f"[Landscape] {len(land.failures)} branches did not converge (see log)")
    if land.near_misses:
        print(f"[Landscape] {len(land.near_misses)} near-miss matches flagged")


def run_experiment(config_path: Optional[str], overrides: Optional[Dict[str, Any]] = None,
                   environ: Optional[Dict[str, str]] = None) -> int:
    started = time.time()
    try:
        cfg = load_config(config_path, overrides=overrides, environ=environ)
        problem = get_registry().create(cfg.problem, cfg.options)
    except ConfigError as e:
        configure_logging(None, "INFO")
        logger.error("invalid configuration: %s", e)
        print(f"[Config] ERROR {e}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(cfg.output_dir, exist_ok=True)
    file_handler = configure_logging(cfg.output_dir, cfg.log_level)
    try:
        logger.info("Saddle Scout %s: %s/%s -> %s", __version__, cfg.problem, cfg.mode, cfg.output_dir)
        try:
            land = execute(cfg, problem)
            outputs = write_outputs(land, problem, cfg.output_dir)
        except ConfigError as e:
            logger.error("invalid configuration: %s", e)
            return EXIT_CONFIG
        except (SaddleScoutError, OSError) as e:
            logger.error("run failed: %s", e)
            return EXIT_SOLVER

        manifest = {
            "version": __version__,
            "command": "run",
            "config_path": config_path,
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "parallelism": cfg.parallelism,
            "wall_time_s": round(time.time() - started, 3),
            "outputs": outputs,
        }
        artifacts.write_json(os.path.join(cfg.output_dir, "manifest.json"), manifest)
        print_report(land)
        return EXIT_OK
    finally:
        if file_handler is not None:
            logging.getLogger().removeHandler(file_handler)
            file_handler.close()


def classify_solution(solution_path: str, config_path: Optional[str] = None,
                      environ: Optional[Dict[str, str]] = None) -> int:
    """Classify a stored solution (a field dump or a JSON coordinate file) and print the result"""
    configure_logging(None, "WARNING")
    try:
        cfg = load_config(config_path, environ=environ) if config_path else None
        if solution_path.endswith(".npz"):
            field = load_field(solution_path)
            beta = cfg.options.get("beta", 300.0) if cfg is not None and cfg.problem == "bec" else 300.0
            problem = BecProblem(field.grid, beta)
            x = field.values
            if cfg is None:
                cfg = load_config(text='[run]\nproblem = "bec"\n', environ={})
        else:
            if cfg is None:
                raise ConfigError("config", "JSON solutions need --config to name the problem")
            problem = get_registry().create(cfg.problem, cfg.options)
            data = artifacts.load_json(solution_path)
            payload = data["coordinates"] if isinstance(data, dict) else data
            x = problem.load_payload(payload)
        builder, _ = make_builder(problem, cfg)
    except ConfigError as e:
        print(f"[Config] ERROR {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as e:
        print(f"[Classify] ERROR cannot read {solution_path}: {e}", file=sys.stderr)
        return EXIT_SOLVER

    try:
        point = builder.make_point(x)
    except SaddleScoutError as e:
        print(f"[Classify] ERROR {e}", file=sys.stderr)
        return EXIT_SOLVER
    print(artifacts.dump_json(point.to_dict()), end="")
    return EXIT_OK


def graph_command(landscape_path: str, output_path: Optional[str] = None) -> int:
    try:
        land = Landscape.from_dict(artifacts.load_json(landscape_path))
        out = output_path or os.path.splitext(landscape_path)[0] + ".dot"
        artifacts.emit_graph(land, out)
    except (OSError, ValueError, KeyError) as e:
        print(f"[Graph] ERROR {e}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"[Graph] wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saddle_scout", description="Constrained solution landscapes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config_file", nargs="?", help="config file (same as --config)")
    run_p.add_argument("--config", dest="config", help="config file")
    run_p.add_argument("--output", help="output directory (overrides run.output_dir)")
    run_p.add_argument("--seed", type=int, help="random seed")
    run_p.add_argument("--parallelism", type=int, help="worker threads for branch runs")
    run_p.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")

    cls_p = sub.add_parser("classify", help="Morse index of a stored solution")
    cls_p.add_argument("solution", help="field dump (.npz) or JSON coordinates")
    cls_p.add_argument("--config", help="config naming the problem")

    graph_p = sub.add_parser("graph", help="DOT graph of a landscape.json")
    graph_p.add_argument("landscape", help="landscape.json")
    graph_p.add_argument("--output", help="DOT file (default: next to the input)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        path = args.config or args.config_file
        if path is None:
            print("[Config] ERROR config: no config file given", file=sys.stderr)
            return EXIT_CONFIG
        overrides = {"output_dir": args.output, "seed": args.seed,
                     "parallelism": args.parallelism, "log_level": args.log_level}
        return run_experiment(path, overrides)
    if args.command == "classify":
        return classify_solution(args.solution, args.config)
    return graph_command(args.landscape, args.output)


if __name__ == "__main__":
    sys.exit(main())
