#!/usr/bin/env python3
"""Attack success versus client count.

Sweeps K in {3, 5, 10} for all three attack methods on a disjoint synthetic
corpus and writes one report per cell plus a summary.csv. The interesting
column is mutual_information against the ln(K) ceiling.
"""

import argparse
import json
import tempfile

from gradlink.cli import main as cli_main


def base_config(seed: int) -> dict:
    return {
        "seed": seed,
        "fed": {"clients": 3, "rounds": 10, "batch_size": 8},
        "model": {"embed_dim": 16, "context": 3, "n_blocks": 2, "ffn_mult": 2},
        "data": {"synthetic": {"train_sentences": 24, "valid_sentences": 4, "overlap": 0.0}},
        "attack": {"method": "greedy", "selector": "both"},
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/client_scale")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    grid = {
        "base": base_config(args.seed),
        "grid": {"clients": [3, 5, 10], "method": ["greedy", "kmeans", "spectral"]},
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
