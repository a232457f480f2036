import json
from datetime import date, datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoutval import ingest
from scoutval.errors import AmbiguityError, DuplicateKeyError, EmptyDatasetError, SchemaError


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


PLAYER_HEADER = ",".join(ingest.PLAYERS_COLUMNS)


class TestParsePlayers:
    def test_three_valid_rows(self, tmp_path):
        p = tmp_path / "players.csv"
        write_lines(
            p,
            [
                PLAYER_HEADER,
                "p1,Ana One,1999-05-01,170.0,Spain,2022-01-01,2025-06-30",
                "p2,Ben Two,2001-02-03,182.5,Wales,,",
                "p3,Cy Three,1995-12-31,,France,2020-07-01,2024-06-30",
            ],
        )
        result = ingest.parse_players(p)
        assert len(result.records) == 3
        assert result.errors == []
        assert result.records[0].player_id == "p1"

    def test_missing_optional_birth_date(self, tmp_path):
        p = tmp_path / "players.csv"
        write_lines(
            p,
            [
                PLAYER_HEADER,
                "p1,Ana One,1999-05-01,170.0,Spain,,",
                "p2,Ben Two,,182.5,Wales,,",
                "p3,Cy Three,1995-12-31,,France,,",
            ],
        )
        result = ingest.parse_players(p)
        assert len(result.records) == 3
        assert result.records[1].birth_date is None

    def test_duplicate_player_id(self, tmp_path):
        p = tmp_path / "players.csv"
        write_lines(
            p,
            [PLAYER_HEADER, "p1,Ana One,,,Spain,,", "p1,Ana Clone,,,Spain,,"],
        )
        with pytest.raises(DuplicateKeyError, match="p1"):
            ingest.parse_players(p)

    def test_missing_required_column(self, tmp_path):
        p = tmp_path / "players.csv"
        write_lines(p, ["player_id,name,birth_date", "p1,Ana,1999-05-01"])
        with pytest.raises(SchemaError, match="height_cm"):
            ingest.parse_players(p)

    def test_malformed_row_reported_not_dropped_silently(self, tmp_path):
        p = tmp_path / "players.csv"
        write_lines(
            p,
            [
                PLAYER_HEADER,
                "p1,Ana One,not-a-date,,Spain,,",
                "p2,Ben Two,2001-02-03,,Wales,,",
            ],
        )
        result = ingest.parse_players(p)
        assert len(result.records) == 1
        assert len(result.errors) == 1
        assert result.errors[0].line == 2

    def test_jsonl_format(self, tmp_path):
        p = tmp_path / "players.jsonl"
        rows = [
            {c: None for c in ingest.PLAYERS_COLUMNS} | {"player_id": "p1", "name": "Ana", "nationality": "ES"},
        ]
        p.write_text("\n".join(json.dumps(r) for r in rows))
        result = ingest.parse_players(p, fmt="jsonl")
        assert result.records[0].player_id == "p1"
        assert result.records[0].height_cm is None


class TestResolveEntity:
    def test_normalization_rules(self):
        registry = {"kylian mbappe": "p7"}
        assert ingest.resolve_entity("  Kylian  MBAPPÉ ", registry) == "p7"

    def test_absent_key(self):
        assert ingest.resolve_entity("Unknown Player", {"kylian mbappe": "p7"}) is None

    def test_registry_ambiguity(self):
        players = [
            ingest.PlayerRecord("p1", "Jose Sá", None, None, "", None, None),
            ingest.PlayerRecord("p2", "José Sa", None, None, "", None, None),
        ]
        with pytest.raises(AmbiguityError):
            ingest.build_registry(players)

    def test_same_player_twice_is_not_ambiguous(self):
        players = [ingest.PlayerRecord("p1", "Jose Sá", None, None, "", None, None)] * 2
        registry = ingest.build_registry(players)
        assert registry == {"jose sa": "p1"}


def art(article_id, player_id="p1", tokens=5, when="2023-01-02T10:00:00+00:00"):
    ts = datetime.fromisoformat(when.replace("Z", "+00:00"))
    return ingest.ArticleFeatures(article_id, player_id, ts, 0.1, (1.0, 0.0), tokens)


class TestFilterArticles:
    def test_threshold_of_three(self):
        arts = [art("a", tokens=2), art("b", tokens=3), art("c", tokens=10)]
        assert [a.article_id for a in ingest.filter_articles(arts)] == ["b", "c"]

    def test_empty(self):
        assert ingest.filter_articles([]) == []

    def test_zero_threshold_is_identity(self):
        arts = [art("a", tokens=0), art("b", tokens=2)]
        assert ingest.filter_articles(arts, min_tokens=0) == arts


def player(pid, name=None):
    return ingest.PlayerRecord(pid, name or f"Player {pid}", date(2000, 1, 1), 180.0, "ES", None, None)


def snap(pid, day, value=1000.0):
    return ingest.ValuationSnapshot(pid, date(2023, 1, day), value)


class TestAssemble:
    def test_sorted_lists(self):
        players = [player("p1"), player("p2")]
        snaps = [snap("p1", 5), snap("p1", 2), snap("p2", 7), snap("p2", 1)]
        arts = [art("a2", "p1", when="2023-01-05T00:00:00Z"), art("a1", "p1"), art("a3", "p2")]
        dataset, orphans = ingest.assemble(players, snaps, arts)
        assert orphans == []
        assert [s.timestamp.day for s in dataset.valuations["p1"]] == [2, 5]
        assert [a.article_id for a in dataset.articles["p1"]] == ["a1", "a2"]

    def test_orphans_reported_and_excluded(self):
        dataset, orphans = ingest.assemble(
            [player("p1")], [snap("p1", 1)], [art("a1", "ghost")]
        )
        assert orphans == ["ghost"]
        assert "ghost" not in dataset.articles

    def test_empty_player_set(self):
        with pytest.raises(EmptyDatasetError):
            ingest.assemble([], [], [])

    def test_token_filter_applied(self):
        dataset, _ = ingest.assemble(
            [player("p1")], [snap("p1", 1)], [art("a1", "p1", tokens=2), art("a2", "p1", tokens=3)]
        )
        assert all(a.token_count >= 3 for a in dataset.articles["p1"])
        assert len(dataset.articles["p1"]) == 1

    @given(st.randoms(use_true_random=False))
    @settings(max_examples=20, deadline=None)
    def test_row_order_never_matters(self, rnd):
        players = [player("p1"), player("p2"), player("p3")]
        snaps = [snap(p.player_id, d) for p in players for d in (3, 9, 6)]
        arts = [art(f"a{i}", "p2", when=f"2023-01-0{1 + i % 9}T08:00:00Z") for i in range(6)]
        base = ingest.assemble(list(players), list(snaps), list(arts))[0]
        for seq in (players, snaps, arts):
            rnd.shuffle(seq)
        shuffled = ingest.assemble(players, snaps, arts)[0]
        assert shuffled == base


class TestRoundTrip:
    def test_file_round_trip_reproduces_dataset(self, tmp_path, small_synth):
        _, dataset, _ = small_synth
        ingest.write_dataset(dataset, tmp_path)
        reloaded, report = ingest.load_dataset(tmp_path)
        assert report.orphans == []
        assert all(not errs for errs in report.row_errors.values())
        assert reloaded == dataset
