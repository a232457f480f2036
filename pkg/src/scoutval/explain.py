"""Exact interventional Shapley attributions for tree ensembles.

The value of a feature subset S is the mean model margin over a background set
with S's features overwritten by the explained row. For a single tree and one
background row, every leaf reduces to a conjunction "features A must be in S,
features B must be out of S" (A: the row satisfies the path constraint, the
background does not; B: the reverse; a constraint neither satisfies kills the
leaf). The Shapley value of such a term has a closed form:

    i in A:  +w * (|A|-1)! |B)! / (|A|+|B|)!
    j in B:  -w * |A|! (|B|-1)! / (|A|+|B|)!

Summing per-leaf terms over trees and averaging over the background gives the
exact interventional Shapley value in polynomial time, which the exhaustive
subset oracle in the tests confirms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gbt import GbtModel, TreeNode, predict_margin_matrix


@dataclass
class Attribution:
    player_id: str
    base_value: float
    contributions: dict[str, float]
    prediction: float  # margin scale; additivity holds here
    feature_values: dict[str, float]


@dataclass
class GlobalImportance:
    ranking: list[tuple[str, float]]  # (feature_name, mean |phi|), descending


def _leaf_regions(root: TreeNode, col_of: dict[str, int]):
    """Yield (leaf_value, [(column, lo, hi), ...]) with lo <= v < hi per feature."""
    regions = []

    def descend(node: TreeNode, bounds: dict[int, list[float]]):
        if node.is_leaf:
            constraints = [
                (col, lo, hi)
                for col, (lo, hi) in sorted(bounds.items())
                if lo != -math.inf or hi != math.inf
            ]
            regions.append((node.value, constraints))
            return
        col = col_of[node.feature_name]
        lo, hi = bounds.get(col, (-math.inf, math.inf))
        descend(node.left, {**bounds, col: [lo, min(hi, node.threshold)]})
        descend(node.right, {**bounds, col: [max(lo, node.threshold), hi]})

    descend(root, {})
    return regions


def _coefficient_tables(max_players: int):
    """c1[a,b] = (a-1)! b! / (a+b)!  and  c2[a,b] = a! (b-1)! / (a+b)!"""
    fact = [math.factorial(i) for i in range(2 * max_players + 1)]
    c1 = np.zeros((max_players + 1, max_players + 1))
    c2 = np.zeros((max_players + 1, max_players + 1))
    for a in range(max_players + 1):
        for b in range(max_players + 1):
            if a >= 1:
                c1[a, b] = fact[a - 1] * fact[b] / fact[a + b]
            if b >= 1:
                c2[a, b] = fact[a] * fact[b - 1] / fact[a + b]
    return c1, c2


def _rows_to_array(rows, names) -> np.ndarray:
    X = np.empty((len(rows), len(names)), dtype=float)
    for i, row in enumerate(rows):
        getter = row.feature if hasattr(row, "feature") else lambda n: row.get(n, math.nan)
        for j, name in enumerate(names):
            X[i, j] = getter(name)
    return X


def shap_values_batch(model: GbtModel, rows, background) -> list[Attribution]:
    """Attributions for many rows against one shared background set."""
    if not len(background):
        raise ValueError("background must be non-empty")
    names = model.feature_names
    col_of = {name: j for j, name in enumerate(names)}
    Xr = _rows_to_array(rows, names)
    Xb = _rows_to_array(background, names)
    n_rows, d = Xr.shape
    n_bg = Xb.shape[0]

    phi = np.zeros((n_rows, d))
    c1, c2 = _coefficient_tables(_max_path(model))
    for root in model.trees:
        for value, constraints in _leaf_regions(root, col_of):
            if not constraints or value == 0.0:
                continue
            cols = np.array([c for c, _, _ in constraints])
            lows = np.array([lo for _, lo, _ in constraints])
            highs = np.array([hi for _, _, hi in constraints])
            sat_x = (Xr[:, cols] >= lows) & (Xr[:, cols] < highs)  # (n_rows, m)
            sat_b = (Xb[:, cols] >= lows) & (Xb[:, cols] < highs)  # (n_bg, m)
            not_x = ~sat_x
            not_b = ~sat_b
            fx = sat_x.astype(float)
            fnx = not_x.astype(float)
            fb = sat_b.astype(float)
            fnb = not_b.astype(float)
            a_count = (fx @ fnb.T).astype(int)  # |A| per (row, bg) pair
            b_count = (fnx @ fb.T).astype(int)  # |B|
            dead = fnx @ fnb.T  # constraints satisfied by neither side
            alive = dead == 0
            w1 = np.where(alive, c1[a_count, b_count], 0.0)
            w2 = np.where(alive, c2[a_count, b_count], 0.0)
            pa = w1 @ fnb  # (n_rows, m): sum over bg of c1 where feature j is in A
            pb = w2 @ fb
            contrib = value * (np.where(sat_x, pa, 0.0) - np.where(not_x, pb, 0.0))
            phi[:, cols] += contrib
    phi /= n_bg

    base = float(predict_margin_matrix(model, Xb).mean())
    margins = predict_margin_matrix(model, Xr)
    out = []
    for i, row in enumerate(rows):
        player_id = getattr(row, "player_id", str(i))
        out.append(
            Attribution(
                player_id=player_id,
                base_value=base,
                contributions={name: float(phi[i, j]) for j, name in enumerate(names)},
                prediction=float(margins[i]),
                feature_values={name: float(Xr[i, j]) for j, name in enumerate(names)},
            )
        )
    return out


def _max_path(model: GbtModel) -> int:
    """Longest number of distinct features on any root-to-leaf path."""

    def depth_of(node: TreeNode, seen: frozenset) -> int:
        if node.is_leaf:
            return len(seen)
        extended = seen | {node.feature_name}
        return max(depth_of(node.left, extended), depth_of(node.right, extended))

    if not model.trees:
        return 1
    return max(1, max(depth_of(t, frozenset()) for t in model.trees))


def shap_values(model: GbtModel, row, background) -> Attribution:
    """Attribution for one row; see shap_values_batch."""
    return shap_values_batch(model, [row], background)[0]


def global_importance(attributions) -> GlobalImportance:
    """Mean |phi| per feature across rows, descending, ties by feature name."""
    if not attributions:
        raise ValueError("global_importance requires at least one attribution")
    names = list(attributions[0].contributions)
    for att in attributions:
        if list(att.contributions) != names:
            raise ValueError("attributions carry inconsistent feature sets")
    totals = {name: 0.0 for name in names}
    for att in attributions:
        for name, value in att.contributions.items():
            totals[name] += abs(value)
    n = len(attributions)
    ranking = sorted(((name, totals[name] / n) for name in names), key=lambda t: (-t[1], t[0]))
    return GlobalImportance(ranking)


def export_summary(attributions, path) -> None:
    """Per-row (feature, feature_value, phi) triples as CSV, for external plotting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player_id", "feature", "feature_value", "shap_value"])
        for att in attributions:
            for name, value in att.contributions.items():
                writer.writerow([att.player_id, name, repr(att.feature_values[name]), repr(value)])


def export_importance(importance: GlobalImportance, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature", "mean_abs_shap"])
        for rank, (name, value) in enumerate(importance.ranking, start=1):
            writer.writerow([rank, name, repr(value)])


def attribution_to_dict(att: Attribution) -> dict:
    return {
        "player_id": att.player_id,
        "base_value": att.base_value,
        "contributions": att.contributions,
        "prediction": att.prediction,
        "feature_values": att.feature_values,
    }


def write_attributions_jsonl(attributions, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for att in attributions:
            fh.write(json.dumps(attribution_to_dict(att)) + "\n")


def read_attributions_jsonl(path) -> list[Attribution]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                Attribution(
                    player_id=obj["player_id"],
                    base_value=float(obj["base_value"]),
                    contributions={k: float(v) for k, v in obj["contributions"].items()},
                    prediction=float(obj["prediction"]),
                    feature_values={k: float(v) for k, v in obj["feature_values"].items()},
                )
            )
    return out
