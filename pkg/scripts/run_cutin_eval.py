"""Closed-loop cut-in evaluation across planners with common random numbers.

Thin wrapper over `treeplan eval` with repo-relative defaults. Writes a CSV
of per-episode crash/offroad/coverage rows plus per-planner aggregate rows.
"""

import argparse
import sys
from pathlib import Path

from treeplan.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=str(REPO / "scenarios" / "cutin.json"))
    ap.add_argument("--config", default=str(REPO / "configs" / "cutin_eval.json"))
    ap.add_argument("--planner", default="tpp,ncr,ncg", help="comma-separated planner list")
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=str(REPO / "eval_results.csv"))
    args = ap.parse_args()

    code = cli_main(
        [
            "eval",
            "--scenario", args.scenario,
            "--config", args.config,
            "--planner", args.planner,
            "--episodes", str(args.episodes),
            "--seed", str(args.seed),
            "--out", args.out,
        ]
    )
    if code == 0:
        print(Path(args.out).read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
