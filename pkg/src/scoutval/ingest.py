"""File-based ingestion: parse CSV/JSONL inputs, resolve entities, assemble a Dataset.

All inputs are flat files with fixed schemas (see the column constants below).
Dates are ISO-8601 calendar dates, article timestamps RFC 3339. Parsers never
drop malformed rows silently: row-level problems are collected into an error
report, structural problems (bad header, duplicate keys) raise.
"""

from __future__ import annotations

import csv
import json
import math
import unicodedata
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

from .errors import (
    AmbiguityError,
    DuplicateKeyError,
    EmptyDatasetError,
    SchemaError,
)

TRANSFER_CATEGORIES = ("permanent", "loan", "free", "unknown")

PLAYERS_COLUMNS = (
    "player_id",
    "name",
    "birth_date",
    "height_cm",
    "nationality",
    "contract_start",
    "contract_expiry",
)
TRANSFERS_COLUMNS = ("player_id", "date", "from_club", "to_club", "fee_eur", "category")
VALUATIONS_COLUMNS = ("player_id", "timestamp", "value_eur")
ARTICLE_KEYS = ("article_id", "player_id", "published_at", "sentiment", "embedding", "token_count")

DEFAULT_MIN_TOKENS = 3


@dataclass(frozen=True)
class TransferEvent:
    date: date
    from_club: str
    to_club: str
    fee_eur: float | None
    category: str


@dataclass(frozen=True)
class PlayerRecord:
    player_id: str
    name: str
    birth_date: date | None
    height_cm: float | None
    nationality: str
    contract_start: date | None
    contract_expiry: date | None
    transfers: tuple[TransferEvent, ...] = ()


@dataclass(frozen=True)
class ValuationSnapshot:
    player_id: str
    timestamp: date
    value_eur: float


@dataclass(frozen=True)
class ArticleFeatures:
    article_id: str
    player_id: str
    published_at: datetime
    sentiment: float
    embedding: tuple[float, ...]
    token_count: int


#: time-ordered market-value snapshots for one player
ValuationSeries = tuple[ValuationSnapshot, ...]


@dataclass(frozen=True)
class Dataset:
    """Immutable, temporally aligned view of all inputs. Safe to share read-only."""

    players: dict[str, PlayerRecord]
    valuations: dict[str, ValuationSeries]
    articles: dict[str, tuple[ArticleFeatures, ...]]


@dataclass
class RowError:
    line: int
    message: str


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)


def _parse_date(raw: str, what: str) -> date:
    try:
        return date.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"{what} is not an ISO-8601 date: {raw!r}")


def _parse_timestamp(raw: str, what: str) -> datetime:
    text = raw.replace("Z", "+00:00")  # py3.10 fromisoformat rejects the Z suffix
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"{what} is not an RFC 3339 timestamp: {raw!r}")
    if ts.tzinfo is None:
        raise ValueError(f"{what} lacks a UTC offset: {raw!r}")
    return ts.astimezone(timezone.utc)


def _iter_rows(path, fmt: str, columns: tuple[str, ...]):
    """Yield (line_number, row_dict) pairs, checking the header/keys up front."""
    path = Path(path)
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in columns:
                if col not in header:
                    raise SchemaError(f"{path.name}: missing required column {col!r}")
            for i, row in enumerate(reader, start=2):
                yield i, row
    elif fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                for col in columns:
                    if col not in obj:
                        raise SchemaError(f"{path.name}: line {i} missing key {col!r}")
                yield i, obj
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _opt(raw) -> str | None:
    """Empty string (CSV) and null (JSONL) both encode an absent optional field."""
    if raw is None:
        return None
    text = str(raw).strip()
    return text or None


def parse_players(path, fmt: str = "csv") -> ParseResult:
    """Parse a players file into PlayerRecords, in file order."""
    result = ParseResult()
    seen: set[str] = set()
    for line, row in _iter_rows(path, fmt, PLAYERS_COLUMNS):
        try:
            player_id = str(row["player_id"]).strip()
            name = str(row["name"]).strip()
            if not player_id:
                raise ValueError("player_id is empty")
            if not name:
                raise ValueError("name is empty")
            if player_id in seen:
                raise DuplicateKeyError(f"duplicate player_id {player_id!r}")
            raw_birth = _opt(row["birth_date"])
            birth = _parse_date(raw_birth, "birth_date") if raw_birth else None
            raw_height = _opt(row["height_cm"])
            height = float(raw_height) if raw_height is not None else None
            if height is not None and not height > 0:
                raise ValueError(f"height_cm must be positive, got {height}")
            raw_start = _opt(row["contract_start"])
            start = _parse_date(raw_start, "contract_start") if raw_start else None
            raw_expiry = _opt(row["contract_expiry"])
            expiry = _parse_date(raw_expiry, "contract_expiry") if raw_expiry else None
            if start is not None and expiry is not None and start > expiry:
                raise ValueError("contract_start after contract_expiry")
            nationality = str(row["nationality"] or "").strip()
        except DuplicateKeyError:
            raise
        except (ValueError, TypeError) as exc:
            result.errors.append(RowError(line, str(exc)))
            continue
        seen.add(player_id)
        result.records.append(
            PlayerRecord(player_id, name, birth, height, nationality, start, expiry)
        )
    return result


def parse_transfers(path, fmt: str = "csv") -> ParseResult:
    """Parse a transfers file into (player_id, TransferEvent) pairs."""
    result = ParseResult()
    for line, row in _iter_rows(path, fmt, TRANSFERS_COLUMNS):
        try:
            player_id = str(row["player_id"]).strip()
            if not player_id:
                raise ValueError("player_id is empty")
            when = _parse_date(str(row["date"]).strip(), "date")
            raw_fee = _opt(row["fee_eur"])
            fee = float(raw_fee) if raw_fee is not None else None
            if fee is not None and fee < 0:
                raise ValueError(f"fee_eur must be non-negative, got {fee}")
            category = _opt(row["category"]) or "unknown"
            if category not in TRANSFER_CATEGORIES:
                raise ValueError(f"unknown transfer category {category!r}")
        except (ValueError, TypeError) as exc:
            result.errors.append(RowError(line, str(exc)))
            continue
        event = TransferEvent(
            when, str(row["from_club"] or "").strip(), str(row["to_club"] or "").strip(), fee, category
        )
        result.records.append((player_id, event))
    return result


def parse_valuations(path, fmt: str = "csv") -> ParseResult:
    """Parse market-value snapshots; duplicate (player_id, timestamp) rows are reported."""
    result = ParseResult()
    seen: set[tuple[str, date]] = set()
    for line, row in _iter_rows(path, fmt, VALUATIONS_COLUMNS):
        try:
            player_id = str(row["player_id"]).strip()
            if not player_id:
                raise ValueError("player_id is empty")
            when = _parse_date(str(row["timestamp"]).strip(), "timestamp")
            value = float(row["value_eur"])
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"value_eur must be a non-negative number, got {row['value_eur']}")
            key = (player_id, when)
            if key in seen:
                raise ValueError(f"duplicate snapshot for {player_id} at {when.isoformat()}")
        except (ValueError, TypeError) as exc:
            result.errors.append(RowError(line, str(exc)))
            continue
        seen.add(key)
        result.records.append(ValuationSnapshot(player_id, when, value))
    return result


def parse_articles(path) -> ParseResult:
    """Parse precomputed article features from JSONL; embedding dimension is fixed
    by the first valid row."""
    result = ParseResult()
    dim: int | None = None
    for line, row in _iter_rows(path, "jsonl", ARTICLE_KEYS):
        try:
            article_id = str(row["article_id"]).strip()
            player_id = str(row["player_id"]).strip()
            if not article_id or not player_id:
                raise ValueError("article_id and player_id are required")
            published = _parse_timestamp(str(row["published_at"]), "published_at")
            sentiment = float(row["sentiment"])
            if not -1.0 <= sentiment <= 1.0:
                raise ValueError(f"sentiment outside [-1, 1]: {sentiment}")
            embedding = tuple(float(x) for x in row["embedding"])
            if not embedding:
                raise ValueError("embedding is empty")
            if dim is not None and len(embedding) != dim:
                raise ValueError(
                    f"article {article_id!r} embedding has dimension {len(embedding)}, expected {dim}"
                )
            token_count = int(row["token_count"])
            if token_count < 0:
                raise ValueError(f"token_count must be non-negative, got {token_count}")
        except (ValueError, TypeError) as exc:
            result.errors.append(RowError(line, str(exc)))
            continue
        if dim is None:
            dim = len(embedding)
        result.records.append(
            ArticleFeatures(article_id, player_id, published, sentiment, embedding, token_count)
        )
    return result


def normalize_name(raw: str) -> str:
    """Trim, lowercase, fold diacritics, collapse internal whitespace."""
    decomposed = unicodedata.normalize("NFKD", raw)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.lower().split())


def build_registry(players) -> dict[str, str]:
    """Map normalized player names to ids; collisions are a hard error."""
    registry: dict[str, str] = {}
    for player in players:
        key = normalize_name(player.name)
        if key in registry and registry[key] != player.player_id:
            raise AmbiguityError(
                f"names {player.name!r} and another entry both normalize to {key!r}"
            )
        registry[key] = player.player_id
    return registry


def resolve_entity(raw_name: str, registry: dict[str, str]) -> str | None:
    """Exact match on the normalized form; no fuzzy guessing."""
    return registry.get(normalize_name(raw_name))


def filter_articles(articles, min_tokens: int = DEFAULT_MIN_TOKENS):
    """Keep articles with token_count >= min_tokens, preserving order."""
    return [a for a in articles if a.token_count >= min_tokens]


def assemble(players, valuations, articles, min_tokens: int = DEFAULT_MIN_TOKENS):
    """Build a Dataset with per-player lists sorted ascending in time.

    Returns (dataset, orphans) where orphans lists the player_ids referenced by
    valuations or articles that resolve to no player. Orphan rows are excluded,
    never silently merged.
    """
    if not players:
        raise EmptyDatasetError("cannot assemble a dataset with no players")
    by_id: dict[str, PlayerRecord] = {}
    for player in players:
        if player.player_id in by_id:
            raise DuplicateKeyError(f"duplicate player_id {player.player_id!r}")
        by_id[player.player_id] = player

    orphans: set[str] = set()
    series: dict[str, list[ValuationSnapshot]] = {}
    seen_snap: set[tuple[str, date]] = set()
    for snap in valuations:
        if snap.player_id not in by_id:
            orphans.add(snap.player_id)
            continue
        key = (snap.player_id, snap.timestamp)
        if key in seen_snap:
            raise DuplicateKeyError(
                f"duplicate snapshot for {snap.player_id} at {snap.timestamp.isoformat()}"
            )
        seen_snap.add(key)
        series.setdefault(snap.player_id, []).append(snap)

    per_player_articles: dict[str, list[ArticleFeatures]] = {}
    dim: int | None = None
    for art in filter_articles(articles, min_tokens):
        if art.player_id not in by_id:
            orphans.add(art.player_id)
            continue
        if dim is None:
            dim = len(art.embedding)
        elif len(art.embedding) != dim:
            raise SchemaError(
                f"article {art.article_id!r} embedding has dimension {len(art.embedding)}, expected {dim}"
            )
        per_player_articles.setdefault(art.player_id, []).append(art)

    dataset = Dataset(
        players=dict(sorted(by_id.items())),
        valuations={
            pid: tuple(sorted(snaps, key=lambda s: s.timestamp))
            for pid, snaps in sorted(series.items())
        },
        articles={
            pid: tuple(sorted(arts, key=lambda a: (a.published_at, a.article_id)))
            for pid, arts in sorted(per_player_articles.items())
        },
    )
    return dataset, sorted(orphans)


def attach_transfers(players, transfer_rows):
    """Return players with their transfer events attached, sorted by date.

    Transfers referencing unknown players are returned as orphan ids.
    """
    known = {p.player_id for p in players}
    per_player: dict[str, list[TransferEvent]] = {}
    orphans: set[str] = set()
    for player_id, event in transfer_rows:
        if player_id not in known:
            orphans.add(player_id)
            continue
        per_player.setdefault(player_id, []).append(event)
    out = []
    for player in players:
        events = tuple(sorted(per_player.get(player.player_id, []), key=lambda e: e.date))
        out.append(
            PlayerRecord(
                player.player_id,
                player.name,
                player.birth_date,
                player.height_cm,
                player.nationality,
                player.contract_start,
                player.contract_expiry,
                events,
            )
        )
    return out, sorted(orphans)


def _fmt_opt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def write_players(players, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAYERS_COLUMNS)
        for p in players:
            writer.writerow(
                [
                    p.player_id,
                    p.name,
                    _fmt_opt(p.birth_date),
                    _fmt_opt(p.height_cm),
                    p.nationality,
                    _fmt_opt(p.contract_start),
                    _fmt_opt(p.contract_expiry),
                ]
            )


def write_transfers(players, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSFERS_COLUMNS)
        for p in players:
            for t in p.transfers:
                writer.writerow(
                    [p.player_id, t.date.isoformat(), t.from_club, t.to_club, _fmt_opt(t.fee_eur), t.category]
                )


def write_valuations(snapshots, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VALUATIONS_COLUMNS)
        for s in snapshots:
            writer.writerow([s.player_id, s.timestamp.isoformat(), repr(s.value_eur)])


def write_articles(articles, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a in articles:
            fh.write(
                json.dumps(
                    {
                        "article_id": a.article_id,
                        "player_id": a.player_id,
                        "published_at": a.published_at.astimezone(timezone.utc).isoformat(),
                        "sentiment": a.sentiment,
                        "embedding": list(a.embedding),
                        "token_count": a.token_count,
                    }
                )
                + "\n"
            )


def write_dataset(dataset: Dataset, out_dir) -> None:
    """Write a Dataset back to the four canonical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    players = list(dataset.players.values())
    write_players(players, out / "players.csv")
    write_transfers(players, out / "transfers.csv")
    snapshots = [s for pid in dataset.valuations for s in dataset.valuations[pid]]
    write_valuations(snapshots, out / "valuations.csv")
    articles = [a for pid in dataset.articles for a in dataset.articles[pid]]
    write_articles(articles, out / "articles.jsonl")


@dataclass
class LoadReport:
    row_errors: dict[str, list[RowError]]
    orphans: list[str]


def load_dataset(data_dir, min_tokens: int = DEFAULT_MIN_TOKENS):
    """Load players/transfers/valuations/articles from a directory.

    transfers.csv and articles.jsonl are optional; the other two are required.
    Returns (dataset, report).
    """
    data = Path(data_dir)
    players_path = data / "players.csv"
    valuations_path = data / "valuations.csv"
    for required in (players_path, valuations_path):
        if not required.exists():
            raise FileNotFoundError(str(required))

    players_res = parse_players(players_path)
    valuations_res = parse_valuations(valuations_path)
    row_errors = {"players": players_res.errors, "valuations": valuations_res.errors}

    players = players_res.records
    orphans: list[str] = []
    transfers_path = data / "transfers.csv"
    if transfers_path.exists():
        transfers_res = parse_transfers(transfers_path)
        row_errors["transfers"] = transfers_res.errors
        players, transfer_orphans = attach_transfers(players, transfers_res.records)
        orphans.extend(transfer_orphans)

    articles: list[ArticleFeatures] = []
    articles_path = data / "articles.jsonl"
    if articles_path.exists():
        articles_res = parse_articles(articles_path)
        row_errors["articles"] = articles_res.errors
        articles = articles_res.records

    dataset, assemble_orphans = assemble(players, valuations_res.records, articles, min_tokens)
    orphans.extend(assemble_orphans)
    return dataset, LoadReport(row_errors=row_errors, orphans=sorted(set(orphans)))
