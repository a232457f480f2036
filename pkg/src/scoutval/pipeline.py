"""End-to-end pipeline stages operating on a state directory.

The state directory is the on-disk feature store of the deployment loop:

    state/
      train.manifest.json   provenance of the trained artifacts
      pipeline.json         resolved training configuration
      regressor.json        expected-value model
      classifier.json       shortlisting model
      pca.json              text projection (text variants only)
      imputation.json       train-split medians
      threshold.json        labeling quantile and tau
      features.csv          frozen training-time feature matrix
      mispricing.csv/.jsonl per-(player, date) reports        (score)
      probabilities.csv     latest shortlisting probabilities  (score)
      shortlist.csv         ranked shortlist                   (shortlist)
      attributions.jsonl/.csv, importance.csv                  (explain)

Training fits everything on the chronological train side only; scoring and
serving never refit anything.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation, explain, features, gbt, mispricing
from .errors import StateError
from .ingest import Dataset

PIPELINE_FORMAT_VERSION = 1

REGRESSOR_FILE = "regressor.json"
CLASSIFIER_FILE = "classifier.json"
PCA_FILE = "pca.json"
IMPUTATION_FILE = "imputation.json"
THRESHOLD_FILE = "threshold.json"
PIPELINE_FILE = "pipeline.json"
FEATURES_FILE = "features.csv"
MISPRICING_CSV = "mispricing.csv"
MISPRICING_JSONL = "mispricing.jsonl"
PROBABILITIES_FILE = "probabilities.csv"
SHORTLIST_FILE = "shortlist.csv"
ATTRIBUTIONS_JSONL = "attributions.jsonl"
ATTRIBUTIONS_CSV = "attributions.csv"
IMPORTANCE_FILE = "importance.csv"
TRAIN_MANIFEST = "train.manifest.json"


@dataclass
class PipelineSettings:
    variant: str = "full"
    quantile_q: float = 0.85
    train_fraction: float = 0.8

    def to_dict(self) -> dict:
        return {
            "version": PIPELINE_FORMAT_VERSION,
            "variant": self.variant,
            "quantile_q": self.quantile_q,
            "train_fraction": self.train_fraction,
        }


@dataclass
class TrainResult:
    regressor: gbt.GbtModel
    classifier: gbt.GbtModel
    pca: features.PcaModel | None
    imputation: features.ImputationStats
    threshold: mispricing.ThresholdSpec
    feature_names: list[str]
    test_metrics: evaluation.MetricsReport


def train_state(
    dataset: Dataset,
    cfg: gbt.TrainConfig,
    settings: PipelineSettings,
    state_dir,
) -> TrainResult:
    """Fit the full pipeline on the chronological train split and persist it."""
    inputs = features.collect_panel(dataset)
    train_inputs, test_inputs = evaluation.chronological_split(inputs, settings.train_fraction)
    imputation = features.fit_imputation(train_inputs)
    wants_text = settings.variant in ("full", "text_only")
    pca = features.fit_pca(features.pooled_train_embeddings(train_inputs)) if wants_text else None

    rows_train = features.finalize_rows(train_inputs, settings.variant, pca, imputation)
    rows_test = features.finalize_rows(test_inputs, settings.variant, pca, imputation)
    names = features.feature_names(settings.variant, pca.retained_k if pca else 0)
    X_train, _ = features.design_matrix(rows_train, names)
    X_test, _ = features.design_matrix(rows_test, names)
    y_train = np.array([mispricing.log_value(r.target_value_eur) for r in rows_train])
    y_test = np.array([mispricing.log_value(r.target_value_eur) for r in rows_test])

    metrics, fitted = evaluation.fit_cell(
        X_train, y_train, X_test, y_test, names, "gbt", cfg, settings.quantile_q
    )
    threshold = mispricing.ThresholdSpec(settings.quantile_q, fitted.tau)

    state = Path(state_dir)
    state.mkdir(parents=True, exist_ok=True)
    gbt.save_model(fitted.regressor, state / REGRESSOR_FILE)
    gbt.save_model(fitted.classifier, state / CLASSIFIER_FILE)
    if pca is not None:
        features.save_pca(pca, state / PCA_FILE)
    features.save_imputation(imputation, state / IMPUTATION_FILE)
    mispricing.save_threshold(threshold, state / THRESHOLD_FILE)
    (state / PIPELINE_FILE).write_text(
        json.dumps(settings.to_dict(), sort_keys=True), encoding="utf-8"
    )
    features.write_matrix_csv(rows_train + rows_test, state / FEATURES_FILE)
    return TrainResult(
        regressor=fitted.regressor,
        classifier=fitted.classifier,
        pca=pca,
        imputation=imputation,
        threshold=threshold,
        feature_names=names,
        test_metrics=metrics,
    )


@dataclass
class LoadedState:
    settings: PipelineSettings
    regressor: gbt.GbtModel
    classifier: gbt.GbtModel
    pca: features.PcaModel | None
    imputation: features.ImputationStats
    threshold: mispricing.ThresholdSpec


def load_state(state_dir) -> LoadedState:
    state = Path(state_dir)
    regressor_path = state / REGRESSOR_FILE
    if not regressor_path.exists():
        raise StateError(f"model not found: {regressor_path}")
    try:
        raw = json.loads((state / PIPELINE_FILE).read_text(encoding="utf-8"))
        settings = PipelineSettings(
            variant=raw["variant"],
            quantile_q=float(raw["quantile_q"]),
            train_fraction=float(raw["train_fraction"]),
        )
        regressor = gbt.load_model(regressor_path)
        classifier = gbt.load_model(state / CLASSIFIER_FILE)
        pca = None
        if settings.variant in ("full", "text_only"):
            pca = features.load_pca(state / PCA_FILE)
        imputation = features.load_imputation(state / IMPUTATION_FILE)
        threshold = mispricing.load_threshold(state / THRESHOLD_FILE)
    except StateError:
        raise
    except Exception as exc:
        raise StateError(f"cannot load serving state from {state}: {exc}")
    return LoadedState(settings, regressor, classifier, pca, imputation, threshold)


def latest_rows(dataset: Dataset, state: LoadedState) -> list[features.FeatureRow]:
    """One row per player at their own latest snapshot, using trained transforms."""
    return features.build_panel(
        dataset, pca=state.pca, variant=state.settings.variant, imputation=state.imputation
    )


def score_trajectories(dataset: Dataset, state: LoadedState):
    """Mispricing reports for every (player, snapshot) point with prior history,
    plus the latest shortlisting probability per player."""
    reports: list[mispricing.MispricingReport] = []
    latest: list[features.FeatureRow] = []
    for player_id in sorted(dataset.players):
        series = dataset.valuations.get(player_id, ())
        rows = []
        for snap in series:
            item = features.collect_input(dataset, player_id, snap.timestamp)
            if item is None:
                continue
            rows.extend(
                features.finalize_rows([item], state.settings.variant, state.pca, state.imputation)
            )
        if not rows:
            continue
        X, _ = features.design_matrix(rows, state.regressor.feature_names)
        log_expected = gbt.predict_matrix(state.regressor, X)
        for row, yhat in zip(rows, log_expected):
            reports.append(
                mispricing.make_report(
                    player_id, row.asof, row.target_value_eur, float(yhat), state.threshold.tau
                )
            )
        latest.append(rows[-1])

    probabilities: dict[str, float] = {}
    if latest:
        X, _ = features.design_matrix(latest, state.classifier.feature_names)
        probs = gbt.predict_matrix(state.classifier, X)
        probabilities = {row.player_id: float(p) for row, p in zip(latest, probs)}
    return reports, probabilities


def write_probabilities(probabilities: dict[str, float], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player_id", "probability"])
        for player_id in sorted(probabilities):
            writer.writerow([player_id, repr(probabilities[player_id])])


def read_probabilities(path) -> dict[str, float]:
    out: dict[str, float] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["player_id"]] = float(row["probability"])
    return out


def latest_mispricing(reports) -> dict[str, float]:
    by_player: dict[str, mispricing.MispricingReport] = {}
    for r in reports:
        prev = by_player.get(r.player_id)
        if prev is None or r.asof > prev.asof:
            by_player[r.player_id] = r
    return {pid: r.mispricing for pid, r in by_player.items()}


def explain_players(dataset: Dataset, state: LoadedState, player_ids=None, background_size: int = 128, seed: int = 0):
    """Interventional attributions of the expected-value model.

    The background is a seeded sample of the latest-row population (all rows
    when it is small); player_ids None explains everyone.
    """
    rows = latest_rows(dataset, state)
    if not rows:
        raise StateError("no scoreable players in the dataset")
    rng = np.random.default_rng(seed)
    if len(rows) > background_size:
        picks = np.sort(rng.permutation(len(rows))[:background_size])
        background = [rows[i] for i in picks]
    else:
        background = rows
    if player_ids is not None:
        wanted = set(player_ids)
        rows = [r for r in rows if r.player_id in wanted]
    attributions = explain.shap_values_batch(state.regressor, rows, background)
    return attributions, explain.global_importance(attributions)
