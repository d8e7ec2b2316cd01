#!/usr/bin/env python3
"""Differential-privacy defense grid.

Fixes the clip bound and sweeps the noise multiplier for the greedy and
kmeans attacks. Purity should fall from near 1.0 at sigma=0 to the random
baseline as sigma grows; each report also carries the advisory epsilon.
"""

import argparse
import json
import tempfile

from gradlink.cli import main as cli_main


def base_config(seed: int, clip: float) -> dict:
    return {
        "seed": seed,
        "fed": {"clients": 5, "rounds": 6, "batch_size": 8},
        "model": {"embed_dim": 16, "context": 3, "n_blocks": 2, "ffn_mult": 2},
        "data": {"synthetic": {"train_sentences": 24, "valid_sentences": 4, "overlap": 0.0}},
        "dp": {"clip": clip, "sigma": 0.0},
        "attack": {"method": "greedy", "selector": "both"},
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/dp_grid")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--clip", type=float, default=1.0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    grid = {
        "base": base_config(args.seed, args.clip),
        "grid": {
            "sigma": [0.0, 0.5, 1.0, 1.5],
            "method": ["greedy", "kmeans"],
        },
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
