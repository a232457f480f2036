import json
from pathlib import Path

import pytest

from scoutval import cli

SYNTH_ARGS = ["--n-players", "60", "--weeks", "16", "--embedding-dim", "4", "--seed", "3"]
TRAIN_ARGS = ["--trees", "25", "--depth", "3", "--seed", "3"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, state = root / "data", root / "state"
    assert cli.main(["synth", *SYNTH_ARGS, "--out", str(data)]) == 0
    assert cli.main(["train", "--data", str(data), "--out", str(state), *TRAIN_ARGS]) == 0
    assert cli.main(["score", "--data", str(data), "--state", str(state)]) == 0
    assert cli.main(["shortlist", "--state", str(state), "--k", "10"]) == 0
    assert cli.main(["explain", "--data", str(data), "--state", str(state), "--background", "32"]) == 0
    return root


def read_nonmanifest_bytes(directory):
    out = {}
    for path in sorted(Path(directory).rglob("*")):
        if path.is_file() and not path.name.endswith(".manifest.json"):
            out[path.relative_to(directory)] = path.read_bytes()
    return out


class TestFlow:
    def test_state_artifacts_exist(self, workspace):
        state = workspace / "state"
        for name in (
            "regressor.json",
            "classifier.json",
            "pca.json",
            "imputation.json",
            "threshold.json",
            "pipeline.json",
            "features.csv",
            "mispricing.csv",
            "mispricing.jsonl",
            "probabilities.csv",
            "shortlist.csv",
            "attributions.jsonl",
            "attributions.csv",
            "importance.csv",
            "train.manifest.json",
        ):
            assert (state / name).exists(), name

    def test_ingest_report(self, workspace, tmp_path):
        assert cli.main(["ingest", "--data", str(workspace / "data"), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "ingest-report.json").read_text())
        assert report["players"] == 60
        assert report["orphans"] == []

    def test_featurize(self, workspace, tmp_path):
        assert cli.main(["featurize", "--data", str(workspace / "data"), "--out", str(tmp_path)]) == 0
        header = (tmp_path / "features.csv").read_text().splitlines()[0]
        assert header.startswith("player_id,asof,target_value_eur,")

    def test_shortlist_csv_shape(self, workspace):
        lines = (workspace / "state" / "shortlist.csv").read_text().strip().splitlines()
        assert lines[0] == "rank,player_id,probability,mispricing"
        assert len(lines) == 11

    def test_shortlist_k_larger_than_population_warns(self, workspace, capsys):
        assert cli.main(["shortlist", "--state", str(workspace / "state"), "--k", "500"]) == 0
        assert "warning" in capsys.readouterr().err

    def test_score_without_model_is_explicit(self, workspace, tmp_path, capsys):
        rc = cli.main(["score", "--data", str(workspace / "data"), "--state", str(tmp_path)])
        assert rc == 1
        assert "model not found" in capsys.readouterr().err

    def test_missing_data_dir(self, tmp_path, capsys):
        rc = cli.main(["ingest", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)])
        assert rc == 1
        assert "missing input file" in capsys.readouterr().err

    def test_manifest_written_per_command(self, workspace):
        man = json.loads((workspace / "state" / "train.manifest.json").read_text())
        assert man["command"] == "train"
        assert man["seed"] == 3
        assert len(man["dataset_fingerprint"]) == 64


class TestDeterminism:
    def test_synth_rerun_overwrites_identically(self, workspace, tmp_path):
        again = tmp_path / "data2"
        assert cli.main(["synth", *SYNTH_ARGS, "--out", str(again)]) == 0
        assert read_nonmanifest_bytes(again) == read_nonmanifest_bytes(workspace / "data")

    def test_ablate_twice_is_byte_identical(self, workspace, tmp_path):
        a, b = tmp_path / "r1", tmp_path / "r2"
        args = ["--data", str(workspace / "data"), "--trees", "10", "--depth", "3", "--seed", "3"]
        assert cli.main(["ablate", *args, "--out", str(a)]) == 0
        assert cli.main(["ablate", *args, "--out", str(b)]) == 0
        assert (a / "ablation.csv").read_bytes() == (b / "ablation.csv").read_bytes()
        assert (a / "ablation.txt").read_bytes() == (b / "ablation.txt").read_bytes()

    def test_manifests_equal_modulo_timestamp(self, workspace, tmp_path):
        a, b = tmp_path / "m1", tmp_path / "m2"
        args = ["--data", str(workspace / "data"), "--trees", "5", "--depth", "2", "--seed", "3"]
        assert cli.main(["ablate", *args, "--out", str(a)]) == 0
        assert cli.main(["ablate", *args, "--out", str(b)]) == 0
        ma = json.loads((a / "ablate.manifest.json").read_text())
        mb = json.loads((b / "ablate.manifest.json").read_text())
        ma.pop("created_utc"), mb.pop("created_utc")
        assert ma == mb

    def test_train_rerun_overwrites_identically(self, workspace, tmp_path):
        state2 = tmp_path / "state2"
        assert cli.main(
            ["train", "--data", str(workspace / "data"), "--out", str(state2), *TRAIN_ARGS]
        ) == 0
        base = workspace / "state"
        for name in ("regressor.json", "classifier.json", "pca.json", "threshold.json", "features.csv"):
            assert (state2 / name).read_bytes() == (base / name).read_bytes(), name

    def test_score_shortlist_explain_rerun_idempotent(self, workspace):
        state = workspace / "state"
        data = str(workspace / "data")
        outputs = (
            "mispricing.csv",
            "mispricing.jsonl",
            "probabilities.csv",
            "shortlist.csv",
            "attributions.jsonl",
            "attributions.csv",
            "importance.csv",
        )

        def run_all():
            assert cli.main(["score", "--data", data, "--state", str(state)]) == 0
            assert cli.main(["shortlist", "--state", str(state), "--k", "10"]) == 0
            assert cli.main(["explain", "--data", data, "--state", str(state), "--background", "32"]) == 0
            return {name: (state / name).read_bytes() for name in outputs}

        assert run_all() == run_all()
