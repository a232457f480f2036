#!/usr/bin/env python3
"""End-to-end demo: generate data, train, score, shortlist, and explain.

Writes everything under ./demo_run/ and prints the top of the shortlist with
each player's top contributing features.
"""

import sys
from pathlib import Path

from scoutval import cli
from scoutval.explain import read_attributions_jsonl


def main() -> int:
    root = Path("demo_run")
    data, state = root / "data", root / "state"
    steps = [
        ["synth", "--n-players", "400", "--weeks", "40", "--embedding-dim", "8",
         "--noise-sigma", "0.05", "--seed", "17", "--out", str(data)],
        ["train", "--data", str(data), "--out", str(state), "--trees", "150",
         "--depth", "4", "--seed", "17"],
        ["score", "--data", str(data), "--state", str(state)],
        ["shortlist", "--state", str(state), "--k", "15"],
        ["explain", "--data", str(data), "--state", str(state), "--background", "64", "--seed", "17"],
    ]
    for argv in steps:
        print(f"$ scoutval {' '.join(argv)}")
        rc = cli.main(argv)
        if rc != 0:
            return rc

    attributions = {a.player_id: a for a in read_attributions_jsonl(state / "attributions.jsonl")}
    print("\nshortlist with top value drivers:")
    for line in (state / "shortlist.csv").read_text().strip().splitlines()[1:6]:
        rank, player_id, prob, m = line.split(",")
        att = attributions[player_id]
        top = sorted(att.contributions.items(), key=lambda kv: -abs(kv[1]))[:3]
        drivers = ", ".join(f"{name} {value:+.3f}" for name, value in top)
        print(f"  #{rank} {player_id}  p={float(prob):.3f}  mispricing={float(m):+.3f}  [{drivers}]")
    print(f"\nartifacts in {state}/ ; serve them with: scoutval serve --state {state}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
