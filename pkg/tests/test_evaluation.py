import json
import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
import pytest

from oracles import brute_force_auc
from scoutval import evaluation, features, gbt, mispricing
from scoutval.errors import SplitError


@dataclass(frozen=True)
class Row:
    player_id: str
    asof: date


def rows_on_days(days):
    return [Row(f"p{i}", date(2023, 1, 1) + timedelta(days=d)) for i, d in enumerate(days)]


class TestChronologicalSplit:
    def test_eighty_twenty(self):
        rows = rows_on_days(range(1, 11))
        train, test = evaluation.chronological_split(rows, 0.8)
        assert [r.asof.day for r in train] == list(range(2, 10))
        assert [r.asof.day for r in test] == [10, 11]

    def test_all_same_day_is_an_error(self):
        with pytest.raises(SplitError):
            evaluation.chronological_split(rows_on_days([3] * 5), 0.8)

    def test_shuffled_input_gives_same_split(self):
        rows = rows_on_days([5, 2, 9, 1, 7, 3, 8, 4, 6, 10])
        a = evaluation.chronological_split(rows, 0.8)
        b = evaluation.chronological_split(list(reversed(rows)), 0.8)
        assert a == b

    def test_boundary_ties_go_to_train(self):
        rows = rows_on_days([1, 2, 3, 4, 4, 4, 5])
        train, test = evaluation.chronological_split(rows, 0.7)
        assert max(r.asof for r in train) == date(2023, 1, 5)
        assert all(r.asof > max(t.asof for t in train) for r in test)

    def test_float_fraction_edge(self):
        # 0.8 * 15 is 12.000000000000002 in floats; ceil must still give 12
        rows = rows_on_days(range(15))
        train, _ = evaluation.chronological_split(rows, 0.8)
        assert len(train) == 12


class TestRegressionMetrics:
    def test_perfect_prediction(self):
        rmse, mae, r2 = evaluation.regression_metrics([1, 2, 3], [1, 2, 3])
        assert (rmse, mae, r2) == (0.0, 0.0, 1.0)

    def test_constant_mean_prediction(self):
        y = [1.0, 2.0, 3.0, 4.0]
        rmse, mae, r2 = evaluation.regression_metrics(y, [2.5] * 4)
        assert r2 == pytest.approx(0.0, abs=1e-12)

    def test_hand_worked_case(self):
        rmse, mae, r2 = evaluation.regression_metrics([0, 0, 1, 1], [0, 0, 0, 0])
        assert rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
        assert mae == pytest.approx(0.5, abs=1e-12)
        assert r2 == pytest.approx(-1.0, abs=1e-12)

    def test_zero_variance_flags_r2(self):
        rmse, mae, r2 = evaluation.regression_metrics([2, 2, 2], [1, 2, 3])
        assert math.isnan(r2)
        assert rmse > 0

    def test_shift_invariance(self):
        y = np.array([1.0, 5.0, 2.0])
        p = np.array([0.5, 4.0, 3.0])
        a = evaluation.regression_metrics(y, p)
        b = evaluation.regression_metrics(y + 10, p + 10)
        assert a[0] == pytest.approx(b[0]) and a[1] == pytest.approx(b[1])


class TestRocAuc:
    def test_perfect_ranking(self):
        assert evaluation.roc_auc([1, 0], [0.9, 0.1]) == 1.0

    def test_all_ties(self):
        assert evaluation.roc_auc([1, 0, 1, 0], [0.5] * 4) == 0.5

    def test_three_of_four_pairs_concordant(self):
        assert evaluation.roc_auc([1, 0, 1, 0], [0.8, 0.7, 0.6, 0.5]) == pytest.approx(0.75)

    def test_single_class_flagged(self):
        assert math.isnan(evaluation.roc_auc([1, 1], [0.2, 0.3]))

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(2, 200))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.choice([0.1, 0.2, 0.3, 0.5, 0.7], size=n)
            fast = evaluation.roc_auc(labels, scores)
            slow = brute_force_auc(labels, scores)
            assert abs(fast - slow) <= 1e-12

    def test_complement_identity_without_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(4, 100))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.permutation(n).astype(float)
            a = evaluation.roc_auc(labels, scores)
            b = evaluation.roc_auc(labels, -scores)
            assert a == pytest.approx(1.0 - b, abs=1e-12)


class TestF1:
    def test_perfect(self):
        assert evaluation.f1([1, 0, 1], [1, 0, 1]) == 1.0

    def test_no_predicted_positives(self):
        assert evaluation.f1([1, 0], [0, 0]) == 0.0

    def test_balanced_errors(self):
        assert evaluation.f1([1, 1, 0], [1, 0, 1]) == pytest.approx(0.5)


@pytest.fixture(scope="module")
def table(small_synth):
    _, dataset, _ = small_synth
    cfg = gbt.TrainConfig(n_trees=15, learning_rate=0.1, max_depth=3, subsample=1.0, seed=3)
    return evaluation.run_ablation(dataset, cfg, 0.85)


class TestAblation:
    def test_table_shape(self, table):
        assert set(table.cells) == {
            (v, l) for v in evaluation.VARIANTS for l in evaluation.LEARNERS
        }
        n_tests = {m.n_test for m in table.cells.values()}
        assert len(n_tests) == 1

    def test_exports(self, table, tmp_path):
        evaluation.write_ablation_csv(table, tmp_path / "a.csv")
        text = evaluation.format_ablation_text(table)
        assert "full" in text and "text_only" in text
        lines = (tmp_path / "a.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 6

    def test_reproducible(self, small_synth, table):
        _, dataset, _ = small_synth
        cfg = gbt.TrainConfig(n_trees=15, learning_rate=0.1, max_depth=3, subsample=1.0, seed=3)
        again = evaluation.run_ablation(dataset, cfg, 0.85)
        assert again.cells == table.cells and again.taus == table.taus


class TestLeakage:
    def fitted_objects(self, train_inputs, test_inputs, cfg):
        """Run the fitting side of the pipeline and capture every fitted object."""
        imputation = features.fit_imputation(train_inputs)
        pca = features.fit_pca(features.pooled_train_embeddings(train_inputs))
        rows_train = features.finalize_rows(train_inputs, "full", pca, imputation)
        names = features.feature_names("full", pca.retained_k)
        X_train, _ = features.design_matrix(rows_train, names)
        y_train = np.array([mispricing.log_value(r.target_value_eur) for r in rows_train])
        scaler = features.fit_scaler(X_train)
        reg = gbt.train_regressor(X_train, y_train, cfg, names)
        tau = mispricing.quantile_threshold(gbt.predict_matrix(reg, X_train) - y_train, 0.85)
        return imputation, pca, scaler, reg, tau

    def test_test_rows_cannot_change_fitted_objects(self, small_synth, tmp_path):
        _, dataset, _ = small_synth
        inputs = features.collect_panel(dataset)
        train_inputs, test_inputs = evaluation.chronological_split(inputs, 0.8)
        cfg = gbt.TrainConfig(n_trees=10, learning_rate=0.1, max_depth=3, subsample=0.8, seed=3)
        base = self.fitted_objects(train_inputs, test_inputs, cfg)

        poked = [
            features.PanelInput(
                item.player_id,
                item.asof,
                item.target_value_eur * 17.0 + 1.0,  # arbitrary replacement targets
                dict(item.structured),
                item.sent_mean,
                item.sent_vol,
                item.n_articles,
                item.pooled_embedding,
            )
            for item in test_inputs
        ]
        after = self.fitted_objects(train_inputs, poked, cfg)

        assert after[0] == base[0]  # imputation medians
        assert np.array_equal(after[1].components, base[1].components)  # PCA bit-identical
        assert np.array_equal(after[2].mean, base[2].mean)
        gbt.save_model(base[3], tmp_path / "a.json")
        gbt.save_model(after[3], tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert after[4] == base[4]  # tau
