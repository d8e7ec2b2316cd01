#!/usr/bin/env python3
"""Attack success versus server learning rate.

A slower-moving global model makes consecutive updates from the same client
look more alike, so linkability should rise as server_lr falls; server_lr=0
is the frozen-model limit where the greedy attack is exact.
"""

import argparse
import json
import tempfile

from gradlink.cli import main as cli_main


def base_config(seed: int) -> dict:
    return {
        "seed": seed,
        "fed": {"clients": 5, "rounds": 6, "batch_size": 8},
        "model": {"embed_dim": 16, "context": 3, "n_blocks": 2, "ffn_mult": 2},
        "data": {"synthetic": {"train_sentences": 24, "valid_sentences": 4, "overlap": 0.0}},
        "attack": {"method": "greedy", "selector": "both"},
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/lr_sweep")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    grid = {
        "base": base_config(args.seed),
        "grid": {"server_lr": [0.0, 0.01, 0.1, 1.0]},
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(grid, fh)
        grid_path = fh.name
    return cli_main([
        "sweep", "--config", grid_path,
        "--out-dir", args.out_dir, "--jobs", str(args.jobs),
    ])


if __name__ == "__main__":
    raise SystemExit(main())
