"""Experiment runner CLI: simulate | attack | report | sweep.

Exit codes: 0 ok, 2 usage/config error, 3 numerical divergence.
"""

import argparse
import concurrent.futures
import copy
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

from . import attack as attack_mod
from .config import METHODS, ExperimentConfig, FilesSpec, load_experiment, parse_experiment
from .corpus import SyntheticSpec, generate_synthetic, load_text_shards
from .errors import ConfigError, DivergedError, GradlinkError, InputError, UsageError
from .fedsim import run_simulation
from .model import ModelConfig, parse_selector
from .report import build_report, read_report, render_report, write_report
from .traceio import (
    read_assignment,
    read_sidecar,
    read_trace,
    write_assignment,
    write_sidecar,
    write_trace,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

# Grid axes the sweep command accepts, mapped onto config fields.
SWEEP_AXES = ("server_lr", "rounds", "clients", "clip", "sigma", "method", "selector")


def _build_shards(cfg: ExperimentConfig):
    if isinstance(cfg.data, FilesSpec):
        return load_text_shards(
            cfg.data.paths,
            cfg.data.train_sentences,
            cfg.data.valid_sentences,
            cfg.data.freq_cutoff,
        )
    return generate_synthetic(cfg.data, cfg.seed)


def _model_config(cfg: ExperimentConfig, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        embed_dim=cfg.model.embed_dim,
        context=cfg.model.context,
        n_blocks=cfg.model.n_blocks,
        ffn_mult=cfg.model.ffn_mult,
    )


def simulate_to_files(cfg: ExperimentConfig, trace_path, sidecar_path):
    shards, vocab = _build_shards(cfg)
    trace, sidecar, losses = run_simulation(
        cfg.fed, _model_config(cfg, vocab.size), shards, cfg.dp
    )
    write_trace(trace_path, trace)
    write_sidecar(sidecar_path, sidecar)
    return losses


def _default_sidecar(trace_path) -> Path:
    return Path(str(trace_path) + ".sidecar.json")


def cmd_simulate(args) -> int:
    cfg = load_experiment(args.config)
    if args.seed is not None:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        doc["seed"] = args.seed
        cfg = parse_experiment(doc)
    sidecar_path = args.sidecar or _default_sidecar(args.out)
    losses = simulate_to_files(cfg, args.out, sidecar_path)
    print(
        f"simulated K={cfg.fed.clients} T={cfg.fed.rounds}: "
        f"loss {losses[0]:.4f} -> {losses[-1]:.4f}"
    )
    print(f"trace: {args.out}")
    print(f"sidecar: {sidecar_path}")
    return EXIT_OK


def run_attack(trace, method: str, selector_text: str):
    selector = parse_selector(selector_text)
    features = attack_mod.build_features(trace, selector)
    if method == "kmeans":
        return attack_mod.kmeans(features, trace.clients, seed=trace.seed)
    if method == "spectral":
        return attack_mod.spectral(features, trace.clients, seed=trace.seed)
    if method == "greedy":
        return attack_mod.greedy_match(features)
    raise UsageError(f"unknown attack method {method!r}")


def cmd_attack(args) -> int:
    trace = read_trace(args.trace)
    labels = run_attack(trace, args.method, args.selector)
    write_assignment(
        args.out,
        labels,
        clients=trace.clients,
        rounds=trace.rounds,
        method=args.method,
        selector=args.selector,
    )
    print(f"assignment: {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    start = time.perf_counter()
    trace = read_trace(args.trace)
    assignment = read_assignment(args.assignment)
    sidecar = read_sidecar(args.sidecar)
    report = build_report(
        trace,
        assignment,
        sidecar,
        baseline_seed=trace.seed,
        wall_clock_seconds=time.perf_counter() - start,
    )
    if args.out:
        write_report(args.out, report)
    sys.stdout.write(render_report(report))
    return EXIT_OK


def _apply_cell(base_doc: dict, overrides: dict) -> dict:
    doc = copy.deepcopy(base_doc)
    for axis, value in overrides.items():
        if axis in ("server_lr", "rounds", "clients"):
            doc.setdefault("fed", {})[axis] = value
        elif axis in ("clip", "sigma"):
            if doc.get("dp") is None:
                raise ConfigError(
                    f"grid axis {axis!r} requires a 'dp' section in the base config"
                )
            doc["dp"][axis] = value
        elif axis in ("method", "selector"):
            doc.setdefault("attack", {})[axis] = value
        else:
            raise ConfigError(f"unknown grid axis {axis!r}")
    return doc


def _config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:12]


def run_sweep_cell(cell_dir: str, doc: dict) -> dict:
    """Run one grid cell end to end; returns its summary row."""
    out = Path(cell_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = parse_experiment(doc)
    trace_path = out / "trace.jsonl"
    sidecar_path = out / "sidecar.json"
    assignment_path = out / "assignment.json"
    report_path = out / "report.json"
    (out / "config.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    simulate_to_files(cfg, trace_path, sidecar_path)
    trace = read_trace(trace_path)
    labels = run_attack(trace, cfg.attack.method, cfg.attack.selector)
    write_assignment(
        assignment_path,
        labels,
        clients=trace.clients,
        rounds=trace.rounds,
        method=cfg.attack.method,
        selector=cfg.attack.selector,
    )
    report = build_report(
        trace, read_assignment(assignment_path), read_sidecar(sidecar_path),
        baseline_seed=cfg.seed,
    )
    write_report(report_path, report)
    return {
        "seed": cfg.seed,
        "config_hash": _config_hash(doc),
        "purity": report["metrics"]["purity"],
        "rand_index": report["metrics"]["rand_index"],
        "mutual_information": report["metrics"]["mutual_information"],
        "status": "ok",
        "error": "",
    }


def _grid_cells(grid_doc: dict):
    base = grid_doc.get("base")
    grid = grid_doc.get("grid")
    unknown = set(grid_doc) - {"base", "grid"}
    if unknown:
        raise ConfigError(f"unknown keys in grid config: {sorted(unknown)}")
    if not isinstance(base, dict) or not isinstance(grid, dict):
        raise ConfigError("grid config needs 'base' and 'grid' objects")
    bad = set(grid) - set(SWEEP_AXES)
    if bad:
        raise ConfigError(f"unknown grid axes: {sorted(bad)} (allowed: {SWEEP_AXES})")
    if not grid or any(not vals for vals in grid.values()):
        raise ConfigError("grid is empty")
    parse_experiment(base)  # fail before launching any cell
    axes = sorted(grid)
    cells = [{}]
    for axis in axes:
        cells = [dict(cell, **{axis: value}) for cell in cells for value in grid[axis]]
    return cells


def cmd_sweep(args) -> int:
    p = Path(args.config)
    if not p.is_file():
        raise ConfigError(f"missing grid config file: {p}")
    try:
        grid_doc = json.loads(p.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"grid config {p} is not valid JSON: {exc}") from exc
    cells = _grid_cells(grid_doc)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for i, overrides in enumerate(cells):
        desc = "_".join(f"{k}-{overrides[k]}" for k in sorted(overrides))
        cell_dir = out_dir / f"cell_{i:03d}_{desc}"
        doc = _apply_cell(grid_doc["base"], overrides)
        jobs.append((i, overrides, str(cell_dir), doc))

    rows = {}

    def record(i, overrides, result):
        rows[i] = dict({"cell": i}, **overrides, **result)

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(run_sweep_cell, cell_dir, doc): (i, overrides)
                for i, overrides, cell_dir, doc in jobs
            }
            for fut in concurrent.futures.as_completed(futures):
                i, overrides = futures[fut]
                try:
                    record(i, overrides, fut.result())
                except Exception as exc:  # cell failures must not stop the sweep
                    record(i, overrides, _failure_row(exc))
    else:
        for i, overrides, cell_dir, doc in jobs:
            try:
                record(i, overrides, run_sweep_cell(cell_dir, doc))
            except Exception as exc:
                record(i, overrides, _failure_row(exc))

    axes = sorted({k for _, overrides, _, _ in jobs for k in overrides})
    fieldnames = (
        ["cell"]
        + axes
        + ["seed", "config_hash", "purity", "rand_index", "mutual_information", "status", "error"]
    )
    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for i in sorted(rows):
            writer.writerow(rows[i])
    failures = sum(1 for r in rows.values() if r["status"] != "ok")
    print(f"sweep: {len(rows)} cells, {failures} failed")
    print(f"summary: {summary_path}")
    return EXIT_OK


def _failure_row(exc: Exception) -> dict:
    return {
        "seed": "",
        "config_hash": "",
        "purity": "",
        "rand_index": "",
        "mutual_information": "",
        "status": "failed",
        "error": f"{type(exc).__name__}: {exc}",
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradlink",
        description=(
            "Federated-learning shuffle de-anonymization testbed: simulate "
            "training traces, run fingerprinting attacks, score them."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run federated training and record a trace")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True, help="trace output path")
    p_sim.add_argument("--sidecar", help="truth sidecar output path")
    p_sim.add_argument("--seed", type=int, help="override the config seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_att = sub.add_parser("attack", help="re-link an anonymized trace")
    p_att.add_argument("--trace", required=True)
    p_att.add_argument("--method", required=True, choices=METHODS)
    p_att.add_argument("--selector", default="both")
    p_att.add_argument("--out", required=True, help="assignment output path")
    p_att.set_defaults(func=cmd_attack)

    p_rep = sub.add_parser("report", help="score an assignment against the truth")
    p_rep.add_argument("--trace", required=True)
    p_rep.add_argument("--assignment", required=True)
    p_rep.add_argument("--sidecar", required=True)
    p_rep.add_argument("--out", help="JSON report output path")
    p_rep.set_defaults(func=cmd_report)

    p_sw = sub.add_parser("sweep", help="run a grid of experiments")
    p_sw.add_argument("--config", required=True, help="grid config (base + axes)")
    p_sw.add_argument("--out-dir", required=True)
    p_sw.add_argument("--jobs", type=int, default=1)
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, UsageError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GradlinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
