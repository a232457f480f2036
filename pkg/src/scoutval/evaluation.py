"""Chronological splitting, regression and ranking metrics, and the ablation harness.

The split unit is the feature row (player at their own cutoff date). Everything
fitted (imputation medians, PCA, scaler, models, the labeling threshold) is
derived from the training side only; the test side contributes nothing but the
reported metrics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import features, gbt, mispricing
from .errors import SplitError
from .ingest import Dataset

VARIANTS = ("full", "no_text", "text_only")
LEARNERS = ("gbt", "linear")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    boundary_date: date


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    r2: float
    roc_auc: float
    f1: float
    n_train: int
    n_test: int


@dataclass
class AblationTable:
    cells: dict[tuple[str, str], MetricsReport]
    split: SplitSpec
    seed: int
    quantile_q: float
    taus: dict[tuple[str, str], float] = field(default_factory=dict)


def chronological_split(rows, train_fraction: float = 0.8):
    """Earliest ceil(f*n) rows train, the rest test; boundary-date ties all train."""
    if not rows:
        raise SplitError("cannot split an empty row list")
    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    ordered = sorted(rows, key=lambda r: (r.asof, r.player_id))
    n = len(ordered)
    n_train = math.ceil(train_fraction * n - 1e-9)
    n_train = min(max(n_train, 1), n)
    boundary = ordered[n_train - 1].asof
    while n_train < n and ordered[n_train].asof == boundary:
        n_train += 1
    train, test = ordered[:n_train], ordered[n_train:]
    if not test:
        raise SplitError("test side is empty after the boundary-tie rule")
    return train, test


def regression_metrics(y_true, y_pred):
    """(rmse, mae, r2); r2 is nan when the true values have zero variance."""
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape or yt.size < 2:
        raise ValueError("regression_metrics needs two equal-length vectors of size >= 2")
    err = yp - yt
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    sst = float(((yt - yt.mean()) ** 2).sum())
    if sst == 0:
        return rmse, mae, math.nan
    sse = float((err**2).sum())
    return rmse, mae, 1.0 - sse / sst


def roc_auc(labels, scores) -> float:
    """Mann-Whitney statistic via midrank summation: P(s+ > s-) + 0.5 P(tie).

    Returns nan when only one class is present.
    """
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        return math.nan
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    midranks = (starts + ends + 1) / 2.0  # average rank of each tie group, 1-based
    rank_sum = float(midranks[inverse][y].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def f1(labels, predictions) -> float:
    """Harmonic mean of precision and recall for the positive class."""
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(predictions, dtype=bool)
    tp = int((y & p).sum())
    fp = int((~y & p).sum())
    fn = int((y & ~p).sum())
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


@dataclass
class FittedPipeline:
    """Everything one pipeline fit produces, for reuse and inspection."""

    learner: str
    feature_names: list[str]
    regressor: object
    classifier: object
    scaler: features.Scaler | None
    tau: float
    pos_weight: float
    train_probabilities: np.ndarray
    test_probabilities: np.ndarray


def _variant_matrices(rows_train, rows_test, variant: str, retained_k: int):
    names = features.feature_names(variant, retained_k)
    X_train, _ = features.design_matrix(rows_train, names)
    X_test, _ = features.design_matrix(rows_test, names)
    return X_train, X_test, names


def fit_regression(X_train, y_train, X_test, names, learner, cfg):
    """Expected-value stage. Returns (model, scaler, yhat_train, yhat_test)."""
    if learner == "gbt":
        reg = gbt.train_regressor(X_train, y_train, cfg, names)
        return reg, None, gbt.predict_matrix(reg, X_train), gbt.predict_matrix(reg, X_test)
    if learner == "linear":
        scaler = features.fit_scaler(X_train)
        reg = gbt.fit_linear(scaler.apply(X_train), y_train, names)
        yhat_train = gbt.predict_linear_matrix(reg, scaler.apply(X_train))
        yhat_test = gbt.predict_linear_matrix(reg, scaler.apply(X_test))
        return reg, scaler, yhat_train, yhat_test
    raise ValueError(f"unknown learner {learner!r}")


def fit_classification(X_train, u_train, X_test, names, learner, cfg):
    """Shortlisting stage. Returns (model, scaler, p_train, p_test)."""
    n_pos = float(u_train.sum())
    n_neg = float(len(u_train) - n_pos)
    pos_weight = n_neg / n_pos if n_pos > 0 else 1.0
    if learner == "gbt":
        clf = gbt.train_classifier(X_train, u_train, cfg, names, pos_weight=pos_weight)
        return clf, None, gbt.predict_matrix(clf, X_train), gbt.predict_matrix(clf, X_test)
    if learner == "linear":
        # linear probability model: least squares on the 0/1 labels
        scaler = features.fit_scaler(X_train)
        clf = gbt.fit_linear(scaler.apply(X_train), u_train, names)
        p_train = gbt.predict_linear_matrix(clf, scaler.apply(X_train))
        p_test = gbt.predict_linear_matrix(clf, scaler.apply(X_test))
        return clf, scaler, p_train, p_test
    raise ValueError(f"unknown learner {learner!r}")


def fit_cell(X_train, y_train, X_test, y_test, names, learner, cfg, quantile_q):
    """Full pipeline on one feature set: regressor -> mispricing -> tau ->
    labels -> classifier. Used by the training stage, where the deployed
    variant is its own expected-value model."""
    reg, reg_scaler, yhat_train, yhat_test = fit_regression(
        X_train, y_train, X_test, names, learner, cfg
    )
    # mispricing on the log scale: M = log(1 + V_hat) - log(1 + V) = yhat - y
    m_train = yhat_train - y_train
    m_test = yhat_test - y_test
    tau = mispricing.quantile_threshold(m_train, quantile_q)
    u_train = np.array(mispricing.label_undervalued(m_train, tau), dtype=float)
    u_test = np.array(mispricing.label_undervalued(m_test, tau), dtype=float)
    clf, _, p_train, p_test = fit_classification(X_train, u_train, X_test, names, learner, cfg)

    n_pos = float(u_train.sum())
    metrics = MetricsReport(
        *regression_metrics(y_test, yhat_test),
        roc_auc=roc_auc(u_test, p_test),
        f1=f1(u_test, p_test >= 0.5),
        n_train=len(y_train),
        n_test=len(y_test),
    )
    fitted = FittedPipeline(
        learner=learner,
        feature_names=names,
        regressor=reg,
        classifier=clf,
        scaler=reg_scaler,
        tau=tau,
        pos_weight=(len(u_train) - n_pos) / n_pos if n_pos else 1.0,
        train_probabilities=p_train,
        test_probabilities=p_test,
    )
    return metrics, fitted


def run_ablation(
    dataset: Dataset,
    cfg: gbt.TrainConfig,
    quantile_q: float = 0.85,
    train_fraction: float = 0.8,
) -> AblationTable:
    """Evaluate variant x learner cells on one shared chronological split.

    Per learner, the undervaluation labels are defined once, from the
    expected-value model trained on all feature groups; the variants then
    compete on the same shortlisting task with restricted classifier features.
    Regression metrics still come from each variant's own regressor.
    """
    inputs = features.collect_panel(dataset)
    train_inputs, test_inputs = chronological_split(inputs, train_fraction)
    split = SplitSpec(train_fraction, max(item.asof for item in train_inputs))

    imputation = features.fit_imputation(train_inputs)
    pca = features.fit_pca(features.pooled_train_embeddings(train_inputs))
    rows_train = features.finalize_rows(train_inputs, "full", pca, imputation)
    rows_test = features.finalize_rows(test_inputs, "full", pca, imputation)
    y_train = np.array([mispricing.log_value(r.target_value_eur) for r in rows_train])
    y_test = np.array([mispricing.log_value(r.target_value_eur) for r in rows_test])

    matrices = {
        variant: _variant_matrices(rows_train, rows_test, variant, pca.retained_k)
        for variant in VARIANTS
    }
    table = AblationTable(cells={}, split=split, seed=cfg.seed, quantile_q=quantile_q)
    for learner in LEARNERS:
        X_full_train, X_full_test, full_names = matrices["full"]
        _, _, yhat_full_train, yhat_full_test = fit_regression(
            X_full_train, y_train, X_full_test, full_names, learner, cfg
        )
        tau = mispricing.quantile_threshold(yhat_full_train - y_train, quantile_q)
        u_train = np.array(
            mispricing.label_undervalued(yhat_full_train - y_train, tau), dtype=float
        )
        u_test = np.array(mispricing.label_undervalued(yhat_full_test - y_test, tau), dtype=float)

        for variant in VARIANTS:
            X_train, X_test, names = matrices[variant]
            _, _, _, yhat_test = fit_regression(X_train, y_train, X_test, names, learner, cfg)
            _, _, _, p_test = fit_classification(X_train, u_train, X_test, names, learner, cfg)
            table.cells[(variant, learner)] = MetricsReport(
                *regression_metrics(y_test, yhat_test),
                roc_auc=roc_auc(u_test, p_test),
                f1=f1(u_test, p_test >= 0.5),
                n_train=len(y_train),
                n_test=len(y_test),
            )
            table.taus[(variant, learner)] = tau
    return table


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.4f}"


def write_ablation_csv(table: AblationTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["variant", "learner", "rmse", "mae", "r2", "roc_auc", "f1", "n_train", "n_test"]
        )
        for variant in VARIANTS:
            for learner in LEARNERS:
                m = table.cells[(variant, learner)]
                writer.writerow(
                    [
                        variant,
                        learner,
                        repr(m.rmse),
                        repr(m.mae),
                        repr(m.r2),
                        repr(m.roc_auc),
                        repr(m.f1),
                        m.n_train,
                        m.n_test,
                    ]
                )


def format_ablation_text(table: AblationTable) -> str:
    """Human-readable aligned table, one row per variant x learner cell."""
    header = f"{'variant':<10} {'learner':<7} {'rmse':>8} {'mae':>8} {'r2':>8} {'roc_auc':>8} {'f1':>8} {'n_train':>8} {'n_test':>7}"
    lines = [
        f"split: earliest {table.split.train_fraction:.0%} for training, boundary {table.split.boundary_date.isoformat()}",
        f"quantile_q: {table.quantile_q}  seed: {table.seed}",
        header,
        "-" * len(header),
    ]
    for variant in VARIANTS:
        for learner in LEARNERS:
            m = table.cells[(variant, learner)]
            lines.append(
                f"{variant:<10} {learner:<7} {_fmt(m.rmse):>8} {_fmt(m.mae):>8} {_fmt(m.r2):>8}"
                f" {_fmt(m.roc_auc):>8} {_fmt(m.f1):>8} {m.n_train:>8} {m.n_test:>7}"
            )
    return "\n".join(lines) + "\n"
