#!/usr/bin/env python3
"""Labeling-quantile sensitivity sweep over the variant x learner ablation.

Runs the ablation at q in {0.80, 0.85, 0.90} on one seeded dataset and prints
the three tables, so the stability of the variant ordering can be eyeballed.
"""

import argparse
import sys

from scoutval import evaluation, gbt, synth


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-players", type=int, default=1500)
    parser.add_argument("--weeks", type=int, default=50)
    parser.add_argument("--text-signal", type=float, default=0.6)
    parser.add_argument("--trees", type=int, default=150)
    parser.add_argument("--seed", type=int, default=17)
    args = parser.parse_args()

    config = synth.SynthConfig(
        n_players=args.n_players,
        weeks=args.weeks,
        embedding_dim=8,
        noise_sigma=0.05,
        text_signal_strength=args.text_signal,
        mispricing_rate=0.15,
        discount_min=0.35,
        discount_max=0.6,
        seed=args.seed,
    )
    dataset, _ = synth.generate(config)
    cfg = gbt.TrainConfig(
        n_trees=args.trees, learning_rate=0.05, max_depth=4, subsample=0.8,
        min_child_cover=16.0, seed=args.seed,
    )
    for q in (0.80, 0.85, 0.90):
        table = evaluation.run_ablation(dataset, cfg, q)
        print(evaluation.format_ablation_text(table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
