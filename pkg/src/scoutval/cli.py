"""Command-line entry point wiring the pipeline stages together.

Subcommands: ingest | featurize | train | score | shortlist | ablate | explain
| synth | serve. Every run writes a <command>.manifest.json next to its outputs
recording seed, config hash, and input fingerprints.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

from . import evaluation, explain, features, gbt, manifest, mispricing, pipeline, synth
from .errors import ScoutvalError
from .ingest import load_dataset

_DATA_FILES = ("players.csv", "transfers.csv", "valuations.csv", "articles.jsonl")


def _data_paths(data_dir) -> list[Path]:
    return [Path(data_dir) / name for name in _DATA_FILES]


def _write_manifest(command: str, out_dir, args, input_paths, seed=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # hash the semantic configuration only; inputs are covered by the content
    # fingerprint and output locations do not affect what gets produced
    config = {
        k: v for k, v in vars(args).items() if k not in ("func", "out", "data", "state")
    }
    man = manifest.make_manifest(command, config, input_paths, seed=seed)
    manifest.write_manifest(man, out / f"{command}.manifest.json")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trees", type=int, default=500)
    parser.add_argument("--learning-rate", type=float, default=0.05)
    parser.add_argument("--depth", type=int, default=6)
    parser.add_argument("--subsample", type=float, default=0.8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quantile", type=float, default=0.85)
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--variant", choices=features.VARIANTS, default="full")


def _train_config(args) -> gbt.TrainConfig:
    return gbt.TrainConfig(
        n_trees=args.trees,
        learning_rate=args.learning_rate,
        max_depth=args.depth,
        subsample=args.subsample,
        seed=args.seed,
    )


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        n_players=args.n_players,
        weeks=args.weeks,
        embedding_dim=args.embedding_dim,
        noise_sigma=args.noise_sigma,
        text_signal_strength=args.text_signal,
        mispricing_rate=args.mispricing_rate,
        seed=args.seed,
        discount_min=args.discount_min,
        discount_max=args.discount_max,
    )
    synth.write_synth(config, args.out)
    _write_manifest("synth", args.out, args, _data_paths(args.out), seed=args.seed)
    print(f"wrote synthetic dataset for {args.n_players} players to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    dataset, report = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "players": len(dataset.players),
        "snapshots": sum(len(v) for v in dataset.valuations.values()),
        "articles": sum(len(a) for a in dataset.articles.values()),
        "orphans": report.orphans,
        "row_errors": {
            name: [{"line": e.line, "message": e.message} for e in errs]
            for name, errs in report.row_errors.items()
            if errs
        },
    }
    (out / "ingest-report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest("ingest", args.out, args, _data_paths(args.data))
    print(f"ingested {payload['players']} players, {payload['snapshots']} snapshots, {payload['articles']} articles")
    if report.orphans:
        print(f"orphaned player ids excluded: {', '.join(report.orphans)}", file=sys.stderr)
    return 0


def cmd_featurize(args) -> int:
    dataset, _ = load_dataset(args.data)
    asof = date.fromisoformat(args.asof) if args.asof else max(
        s.timestamp for series in dataset.valuations.values() for s in series
    )
    inputs = features.collect_panel(dataset, asof)
    imputation = features.fit_imputation(inputs)
    pca = None
    if args.variant in ("full", "text_only"):
        pca = features.fit_pca(features.pooled_train_embeddings(inputs))
    rows = features.finalize_rows(inputs, args.variant, pca, imputation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features.write_matrix_csv(rows, out / "features.csv")
    _write_manifest("featurize", args.out, args, _data_paths(args.data))
    print(f"wrote {len(rows)} feature rows as of {asof.isoformat()} to {out / 'features.csv'}")
    return 0


def cmd_train(args) -> int:
    dataset, _ = load_dataset(args.data)
    cfg = _train_config(args)
    settings = pipeline.PipelineSettings(
        variant=args.variant, quantile_q=args.quantile, train_fraction=args.train_fraction
    )
    result = pipeline.train_state(dataset, cfg, settings, args.out)
    _write_manifest("train", args.out, args, _data_paths(args.data), seed=args.seed)
    m = result.test_metrics
    print(
        f"trained {args.variant} variant: test rmse {m.rmse:.4f}, r2 {m.r2:.4f},"
        f" roc_auc {m.roc_auc:.4f} ({m.n_train} train / {m.n_test} test rows)"
    )
    return 0


def cmd_score(args) -> int:
    state = pipeline.load_state(args.state)
    dataset, _ = load_dataset(args.data)
    reports, probabilities = pipeline.score_trajectories(dataset, state)
    out = Path(args.state)
    mispricing.write_reports_csv(reports, out / pipeline.MISPRICING_CSV)
    mispricing.write_reports_jsonl(reports, out / pipeline.MISPRICING_JSONL)
    pipeline.write_probabilities(probabilities, out / pipeline.PROBABILITIES_FILE)
    _write_manifest("score", args.state, args, _data_paths(args.data))
    print(f"scored {len(probabilities)} players ({len(reports)} trajectory points)")
    return 0


def cmd_shortlist(args) -> int:
    state_dir = Path(args.state)
    prob_path = state_dir / pipeline.PROBABILITIES_FILE
    if not prob_path.exists():
        raise ScoutvalError(f"probabilities not found: {prob_path}; run score first")
    probabilities = pipeline.read_probabilities(prob_path)
    reports = mispricing.read_reports_jsonl(state_dir / pipeline.MISPRICING_JSONL)
    entries = mispricing.shortlist(probabilities, args.k)
    if len(entries) < args.k:
        print(f"warning: only {len(entries)} players available for k={args.k}", file=sys.stderr)
    mispricing.write_shortlist_csv(entries, pipeline.latest_mispricing(reports), state_dir / pipeline.SHORTLIST_FILE)
    _write_manifest("shortlist", args.state, args, [prob_path])
    print(f"wrote {len(entries)} shortlist entries to {state_dir / pipeline.SHORTLIST_FILE}")
    return 0


def cmd_explain(args) -> int:
    state = pipeline.load_state(args.state)
    dataset, _ = load_dataset(args.data)
    player_ids = args.players.split(",") if args.players else None
    attributions, importance = pipeline.explain_players(
        dataset, state, player_ids, background_size=args.background, seed=args.seed
    )
    out = Path(args.state)
    explain.write_attributions_jsonl(attributions, out / pipeline.ATTRIBUTIONS_JSONL)
    explain.export_summary(attributions, out / pipeline.ATTRIBUTIONS_CSV)
    explain.export_importance(importance, out / pipeline.IMPORTANCE_FILE)
    _write_manifest("explain", args.state, args, _data_paths(args.data), seed=args.seed)
    print(f"explained {len(attributions)} players; top feature: {importance.ranking[0][0]}")
    return 0


def cmd_ablate(args) -> int:
    dataset, _ = load_dataset(args.data)
    cfg = _train_config(args)
    table = evaluation.run_ablation(dataset, cfg, args.quantile, args.train_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_ablation_csv(table, out / "ablation.csv")
    text = evaluation.format_ablation_text(table)
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    _write_manifest("ablate", args.out, args, _data_paths(args.data), seed=args.seed)
    print(text, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoutval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--n-players", type=int, default=200)
    p.add_argument("--weeks", type=int, default=40)
    p.add_argument("--embedding-dim", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--text-signal", type=float, default=0.5)
    p.add_argument("--mispricing-rate", type=float, default=0.15)
    p.add_argument("--discount-min", type=float, default=0.2)
    p.add_argument("--discount-max", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse and validate a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("featurize", help="export a feature matrix at a cutoff date")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--asof", default=None, help="ISO date; defaults to the latest snapshot")
    p.add_argument("--variant", choices=features.VARIANTS, default="full")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit the expected-value and shortlisting models")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="compute mispricing reports and probabilities")
    p.add_argument("--data", required=True)
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("shortlist", help="rank players by undervaluation probability")
    p.add_argument("--state", required=True)
    p.add_argument("--k", type=int, default=50)
    p.set_defaults(func=cmd_shortlist)

    p = sub.add_parser("explain", help="attribute expected-value predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--players", default=None, help="comma-separated ids; default everyone")
    p.add_argument("--background", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", help="run the variant x learner ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="serve precomputed artifacts over HTTP")
    p.add_argument("--state", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc}", file=sys.stderr)
        return 1
    except ScoutvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
