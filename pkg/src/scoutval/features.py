"""Leakage-aware per-player features: market dynamics, contract/transfer context,
sentiment aggregates, pooled embeddings with PCA, and feature-row assembly.

Every operation here sees only data timestamped at or before its cutoff date.
The market block additionally excludes the snapshot that supplies the target
value, so the expected-value model never sees the quantity it predicts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    InsufficientDataError,
    InsufficientHistoryError,
)
from .ingest import Dataset, PlayerRecord

DAYS_PER_YEAR = 365.25
PCA_FORMAT_VERSION = 1

STRUCTURED_FEATURES = (
    "age_years",
    "height_cm",
    "contract_remaining_days",
    "transfer_count",
    "last_fee_eur",
    "mv_mean",
    "mv_std",
    "mv_max",
    "mv_trend",
    "n_snapshots",
)
TEXT_BASE_FEATURES = ("sent_mean", "sent_vol", "n_articles")
VARIANTS = ("full", "no_text", "text_only")


@dataclass(frozen=True)
class MarketFeatures:
    mv_mean: float
    mv_std: float
    mv_max: float
    mv_trend: float  # EUR per day, OLS slope vs days since first snapshot
    n_snapshots: int


@dataclass(frozen=True)
class ContextFeatures:
    age_years: float  # nan when birth_date missing; imputed downstream
    contract_remaining_days: float
    transfer_count: int
    last_fee_eur: float | None


@dataclass(frozen=True)
class TextFeatures:
    sent_mean: float
    sent_vol: float
    n_articles: int
    pooled_embedding: tuple[float, ...]


@dataclass(frozen=True)
class PcaModel:
    """Centered principal axes, all of them; transforms use the first retained_k."""

    mean_vector: np.ndarray
    components: np.ndarray  # (n_components, dim), rows orthonormal
    explained_variance: np.ndarray  # non-increasing
    retained_k: int

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class FeatureRow:
    player_id: str
    asof: date
    structured: dict[str, float]
    text: dict[str, float]
    target_value_eur: float

    def feature(self, name: str) -> float:
        if name in self.structured:
            return self.structured[name]
        if name in self.text:
            return self.text[name]
        return math.nan


def market_features(series, asof: date) -> MarketFeatures:
    """Summaries of the valuation history at or before asof."""
    hist = sorted((s for s in series if s.timestamp <= asof), key=lambda s: s.timestamp)
    if not hist:
        raise InsufficientHistoryError(f"no snapshot at or before {asof.isoformat()}")
    values = np.array([s.value_eur for s in hist], dtype=float)
    n = len(values)
    if n == 1:
        return MarketFeatures(float(values[0]), 0.0, float(values[0]), 0.0, 1)
    days = np.array([(s.timestamp - hist[0].timestamp).days for s in hist], dtype=float)
    centered_t = days - days.mean()
    denom = float((centered_t**2).sum())
    trend = float((centered_t * (values - values.mean())).sum() / denom) if denom > 0 else 0.0
    return MarketFeatures(
        mv_mean=float(values.mean()),
        mv_std=float(values.std(ddof=1)),
        mv_max=float(values.max()),
        mv_trend=trend,
        n_snapshots=n,
    )


def context_features(player: PlayerRecord, asof: date) -> ContextFeatures:
    """Age, contract runway, and transfer activity as of the cutoff."""
    if player.birth_date is not None:
        age = (asof - player.birth_date).days / DAYS_PER_YEAR
    else:
        age = math.nan
    if player.contract_expiry is not None:
        remaining = float(max(0, (player.contract_expiry - asof).days))
    else:
        remaining = math.nan
    past = [t for t in player.transfers if t.date <= asof]
    last_fee = None
    for t in past:
        if t.fee_eur is not None:
            last_fee = t.fee_eur
    return ContextFeatures(age, remaining, len(past), last_fee)


def sentiment_aggregate(scores) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1, zero for a single score)."""
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise ValueError("sentiment_aggregate requires at least one score")
    vol = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), vol


def mean_pool(embeddings) -> np.ndarray:
    """Element-wise mean of equal-length vectors."""
    if not len(embeddings):
        raise ValueError("mean_pool requires at least one embedding")
    dim = len(embeddings[0])
    for i, emb in enumerate(embeddings):
        if len(emb) != dim:
            raise DimensionError(f"embedding {i} has dimension {len(emb)}, expected {dim}")
    return np.asarray(embeddings, dtype=float).mean(axis=0)


def fit_pca(train_matrix, variance_target: float = 0.95) -> PcaModel:
    """PCA via SVD of the centered training matrix.

    Sign convention: each component's largest-magnitude entry is non-negative,
    which keeps refits byte-identical. retained_k is the smallest k whose
    cumulative explained-variance ratio reaches the target.
    """
    X = np.asarray(train_matrix, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise InsufficientDataError("fit_pca needs a 2-D matrix with at least one column")
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError(f"fit_pca needs at least 2 rows, got {n}")
    mean = X.mean(axis=0)
    _, singular, vt = np.linalg.svd(X - mean, full_matrices=False)
    explained = singular**2 / (n - 1)
    components = vt.copy()
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    total = float(explained.sum())
    if total > 0:
        ratios = np.cumsum(explained) / total
    else:
        ratios = np.ones_like(explained)  # degenerate constant data
    k = int(np.searchsorted(ratios, variance_target - 1e-12) + 1)
    k = min(k, len(explained))
    return PcaModel(mean, components, explained, k)


def pca_transform(model: PcaModel, row) -> np.ndarray:
    """Project a row onto the retained components, in order."""
    vec = np.asarray(row, dtype=float)
    if vec.shape != (model.input_dim,):
        raise DimensionError(f"row has dimension {vec.shape}, expected ({model.input_dim},)")
    return (vec - model.mean_vector) @ model.components[: model.retained_k].T


def save_pca(model: PcaModel, path) -> None:
    payload = {
        "version": PCA_FORMAT_VERSION,
        "mean_vector": model.mean_vector.tolist(),
        "components": model.components.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "retained_k": model.retained_k,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_pca(path) -> PcaModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != PCA_FORMAT_VERSION:
        raise InsufficientDataError(f"unsupported pca file version: {payload.get('version')!r}")
    return PcaModel(
        np.array(payload["mean_vector"], dtype=float),
        np.array(payload["components"], dtype=float),
        np.array(payload["explained_variance"], dtype=float),
        int(payload["retained_k"]),
    )


@dataclass(frozen=True)
class ImputationStats:
    """Train-split medians used to fill missing structured cells."""

    medians: dict[str, float]


@dataclass
class PanelInput:
    """Pre-imputation per-player inputs gathered at one cutoff date."""

    player_id: str
    asof: date
    target_value_eur: float
    structured: dict[str, float]  # may contain nan for missing height/fee/age/contract
    sent_mean: float
    sent_vol: float
    n_articles: int
    pooled_embedding: np.ndarray | None


def collect_input(dataset: Dataset, player_id: str, asof: date) -> PanelInput | None:
    """Gather raw inputs for one player at one cutoff.

    The target is the latest snapshot at or before asof; the market block is
    computed from snapshots strictly before that target so the current value
    never enters the features. Players lacking prior history yield None.
    """
    series = dataset.valuations.get(player_id, ())
    hist = [s for s in series if s.timestamp <= asof]
    if not hist:
        return None
    target = hist[-1]
    prior = [s for s in hist if s.timestamp < target.timestamp]
    if not prior:
        return None
    market = market_features(prior, asof)
    context = context_features(dataset.players[player_id], asof)
    structured = {
        "age_years": context.age_years,
        "height_cm": dataset.players[player_id].height_cm
        if dataset.players[player_id].height_cm is not None
        else math.nan,
        "contract_remaining_days": context.contract_remaining_days,
        "transfer_count": float(context.transfer_count),
        "last_fee_eur": context.last_fee_eur if context.last_fee_eur is not None else math.nan,
        "mv_mean": market.mv_mean,
        "mv_std": market.mv_std,
        "mv_max": market.mv_max,
        "mv_trend": market.mv_trend,
        "n_snapshots": float(market.n_snapshots),
    }
    articles = [a for a in dataset.articles.get(player_id, ()) if a.published_at.date() <= asof]
    if articles:
        sent_mean, sent_vol = sentiment_aggregate([a.sentiment for a in articles])
        pooled = mean_pool([a.embedding for a in articles])
    else:
        sent_mean, sent_vol, pooled = 0.0, 0.0, None
    return PanelInput(
        player_id=player_id,
        asof=asof,
        target_value_eur=target.value_eur,
        structured=structured,
        sent_mean=sent_mean,
        sent_vol=sent_vol,
        n_articles=len(articles),
        pooled_embedding=pooled,
    )


def collect_panel(dataset: Dataset, asof: date | None = None) -> list[PanelInput]:
    """One PanelInput per player with market history.

    With an explicit asof every player is cut at that date; with None each
    player is cut at their own latest snapshot, which gives the per-row asof
    spread the chronological evaluation needs.
    """
    inputs = []
    for player_id in sorted(dataset.players):
        series = dataset.valuations.get(player_id, ())
        if not series:
            continue
        cutoff = asof if asof is not None else series[-1].timestamp
        item = collect_input(dataset, player_id, cutoff)
        if item is not None:
            inputs.append(item)
    return inputs


def fit_imputation(inputs) -> ImputationStats:
    """Median of the finite values per structured feature; 0.0 when none exist."""
    medians = {}
    for name in STRUCTURED_FEATURES:
        values = np.array([item.structured[name] for item in inputs], dtype=float)
        finite = values[np.isfinite(values)]
        medians[name] = float(np.median(finite)) if finite.size else 0.0
    return ImputationStats(medians)


def save_imputation(stats: ImputationStats, path) -> None:
    Path(path).write_text(json.dumps(stats.medians, sort_keys=True), encoding="utf-8")


def load_imputation(path) -> ImputationStats:
    return ImputationStats(json.loads(Path(path).read_text(encoding="utf-8")))


def text_feature_names(retained_k: int) -> list[str]:
    return list(TEXT_BASE_FEATURES) + [f"emb_pc{i}" for i in range(retained_k)]


def feature_names(variant: str, retained_k: int = 0) -> list[str]:
    """The frozen feature-name registry for one variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    names: list[str] = []
    if variant in ("full", "no_text"):
        names.extend(STRUCTURED_FEATURES)
    if variant in ("full", "text_only"):
        names.extend(text_feature_names(retained_k))
    return names


def finalize_rows(inputs, variant: str, pca: PcaModel | None, imputation: ImputationStats) -> list[FeatureRow]:
    """Impute and assemble FeatureRows for one variant. No NaN/Inf survives."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    wants_text = variant in ("full", "text_only")
    if wants_text and pca is None:
        raise ValueError(f"variant {variant!r} requires a fitted PcaModel")
    rows = []
    for item in inputs:
        structured: dict[str, float] = {}
        if variant in ("full", "no_text"):
            for name in STRUCTURED_FEATURES:
                value = item.structured[name]
                if not math.isfinite(value):
                    value = imputation.medians[name]
                structured[name] = float(value)
        text: dict[str, float] = {}
        if wants_text:
            text["sent_mean"] = item.sent_mean
            text["sent_vol"] = item.sent_vol
            text["n_articles"] = float(item.n_articles)
            if item.pooled_embedding is not None:
                projected = pca_transform(pca, item.pooled_embedding)
            else:
                # mean embedding maps to the PCA origin
                projected = np.zeros(pca.retained_k)
            for i, value in enumerate(projected):
                text[f"emb_pc{i}"] = float(value)
        rows.append(FeatureRow(item.player_id, item.asof, structured, text, item.target_value_eur))
    return rows


def build_matrix(
    dataset: Dataset,
    asof: date,
    pca: PcaModel | None = None,
    variant: str = "full",
    imputation: ImputationStats | None = None,
) -> list[FeatureRow]:
    """One FeatureRow per player with market history at asof.

    When imputation is None the medians are fitted on the matrix itself; the
    evaluation harness always passes train-fitted stats instead.
    """
    inputs = collect_panel(dataset, asof)
    if imputation is None:
        imputation = fit_imputation(inputs)
    return finalize_rows(inputs, variant, pca, imputation)


def build_panel(
    dataset: Dataset,
    pca: PcaModel | None = None,
    variant: str = "full",
    imputation: ImputationStats | None = None,
) -> list[FeatureRow]:
    """Like build_matrix but with each player cut at their own latest snapshot."""
    inputs = collect_panel(dataset, None)
    if imputation is None:
        imputation = fit_imputation(inputs)
    return finalize_rows(inputs, variant, pca, imputation)


def pooled_train_embeddings(inputs) -> np.ndarray:
    """Stack pooled embeddings of players that have articles, for PCA fitting."""
    vectors = [item.pooled_embedding for item in inputs if item.pooled_embedding is not None]
    if not vectors:
        raise InsufficientDataError("no player has any article; cannot fit PCA")
    return np.vstack(vectors)


def design_matrix(rows, names=None):
    """Rows to a dense (n, d) matrix in registry order. Returns (X, names)."""
    if not rows:
        raise ValueError("design_matrix requires at least one row")
    if names is None:
        names = list(rows[0].structured) + list(rows[0].text)
    X = np.empty((len(rows), len(names)), dtype=float)
    for i, row in enumerate(rows):
        for j, name in enumerate(names):
            X[i, j] = row.feature(name)
    return X, list(names)


@dataclass(frozen=True)
class Scaler:
    """Train-fitted standardization for the linear baseline; trees use raw values."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def fit_scaler(X: np.ndarray) -> Scaler:
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Scaler(mean, scale)


def write_matrix_csv(rows, path) -> None:
    """Export a feature matrix with player_id, asof, target and named columns."""
    if not rows:
        raise ValueError("nothing to export")
    names = list(rows[0].structured) + list(rows[0].text)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player_id", "asof", "target_value_eur", *names])
        for row in rows:
            writer.writerow(
                [row.player_id, row.asof.isoformat(), repr(row.target_value_eur)]
                + [repr(row.feature(n)) for n in names]
            )
