"""Log-value transforms, mispricing scores, quantile labels, and shortlist ranking."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

THRESHOLD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MispricingReport:
    player_id: str
    asof: date
    observed_value_eur: float
    expected_value_eur: float
    log_observed: float
    log_expected: float
    mispricing: float
    undervalued: bool


@dataclass(frozen=True)
class ThresholdSpec:
    quantile_q: float = 0.85
    tau: float = 0.0


def log_value(v: float) -> float:
    """ln(1 + v); the +1 keeps zero-value entries finite."""
    if v < 0:
        raise ValueError(f"value must be non-negative, got {v}")
    return math.log1p(v)


def mispricing_score(expected_eur: float, observed_eur: float) -> float:
    """Positive when the model thinks the player is worth more than the market does."""
    return log_value(expected_eur) - log_value(observed_eur)


def quantile_threshold(scores, q: float) -> float:
    """Linear-interpolation quantile between order statistics."""
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise ValueError("quantile_threshold requires at least one score")
    if not 0 < q < 1:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    return float(np.quantile(arr, q))


def label_undervalued(scores, tau: float) -> list[bool]:
    """True iff the score reaches the threshold (inclusive)."""
    return [bool(s >= tau) for s in scores]


def shortlist(probabilities: dict[str, float], k: int) -> list[tuple[str, float]]:
    """Top-k by descending probability, ties broken by ascending player_id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(probabilities.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def make_report(
    player_id: str,
    asof: date,
    observed_eur: float,
    log_expected: float,
    tau: float,
) -> MispricingReport:
    """Assemble one report from the regressor's log-scale prediction."""
    log_observed = log_value(observed_eur)
    m = log_expected - log_observed
    return MispricingReport(
        player_id=player_id,
        asof=asof,
        observed_value_eur=observed_eur,
        expected_value_eur=math.expm1(log_expected),
        log_observed=log_observed,
        log_expected=log_expected,
        mispricing=m,
        undervalued=m >= tau,
    )


REPORT_COLUMNS = (
    "player_id",
    "asof",
    "observed_value_eur",
    "expected_value_eur",
    "log_observed",
    "log_expected",
    "mispricing",
    "undervalued",
)


def write_reports_csv(reports, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.player_id,
                    r.asof.isoformat(),
                    repr(r.observed_value_eur),
                    repr(r.expected_value_eur),
                    repr(r.log_observed),
                    repr(r.log_expected),
                    repr(r.mispricing),
                    int(r.undervalued),
                ]
            )


def write_reports_jsonl(reports, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(report_to_dict(r)) + "\n")


def report_to_dict(r: MispricingReport) -> dict:
    return {
        "player_id": r.player_id,
        "asof": r.asof.isoformat(),
        "observed_value_eur": r.observed_value_eur,
        "expected_value_eur": r.expected_value_eur,
        "log_observed": r.log_observed,
        "log_expected": r.log_expected,
        "mispricing": r.mispricing,
        "undervalued": r.undervalued,
    }


def read_reports_jsonl(path) -> list[MispricingReport]:
    reports = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            reports.append(
                MispricingReport(
                    player_id=obj["player_id"],
                    asof=date.fromisoformat(obj["asof"]),
                    observed_value_eur=float(obj["observed_value_eur"]),
                    expected_value_eur=float(obj["expected_value_eur"]),
                    log_observed=float(obj["log_observed"]),
                    log_expected=float(obj["log_expected"]),
                    mispricing=float(obj["mispricing"]),
                    undervalued=bool(obj["undervalued"]),
                )
            )
    return reports


def write_shortlist_csv(entries, mispricing_by_player: dict[str, float], path) -> None:
    """Ranked CSV: rank, player_id, probability, mispricing."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "player_id", "probability", "mispricing"])
        for rank, (player_id, prob) in enumerate(entries, start=1):
            writer.writerow(
                [rank, player_id, repr(prob), repr(mispricing_by_player.get(player_id, math.nan))]
            )


def save_threshold(spec: ThresholdSpec, path) -> None:
    payload = {"version": THRESHOLD_FORMAT_VERSION, "quantile_q": spec.quantile_q, "tau": spec.tau}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_threshold(path) -> ThresholdSpec:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != THRESHOLD_FORMAT_VERSION:
        raise ValueError(f"unsupported threshold file version: {payload.get('version')!r}")
    return ThresholdSpec(float(payload["quantile_q"]), float(payload["tau"]))
