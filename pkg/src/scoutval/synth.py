"""Seeded synthetic transfer-market generator with known ground truth.

Fair value follows a deterministic nonlinear function of age, per-player career
trend, contract runway and a latent quality factor (plus multiplicative market
noise). A seeded subset of players is undervalued by construction: their
current (latest) observed value is discounted below fair while their history
stays clean, so the gap is recoverable from expected-vs-observed comparisons
but never leaks into features computed from prior snapshots. Membership in the
subset is drawn with propensity tilted by risk factors the market plausibly
overreacts to: declining trend, short contract runway, off-peak age, noisy
valuations, and a hostile press. The first four are recoverable from the
structured features, which is what lets a shortlisting classifier rank
undervaluation without seeing values; the press disposition shows up only in
the news streams, which is what makes text a complementary signal. Article
tone tracks quality, form, and press disposition; tone dispersion tracks
market uncertainty. All text effects scale with text_signal_strength, and at
strength zero the text is pure noise.

Structured and text streams draw from independent per-player substreams, so
changing text_signal_strength cannot perturb the structured data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .ingest import (
    ArticleFeatures,
    PlayerRecord,
    TransferEvent,
    ValuationSnapshot,
    assemble,
    write_articles,
    write_players,
    write_transfers,
    write_valuations,
)

GLOBAL_START = date(2018, 1, 5)

_LOG_BASE = 14.3  # exp -> about 1.6M EUR
_QUALITY_COEF = 1.1
_AGE_COEF = 0.9
_AGE_PEAK = 26.5
_AGE_SCALE = 6.0
_CONTRACT_COEF = 0.12
_INTERACTION_COEF = 6.0
_SLOPE_SD = 0.006
_NEUTRAL_CONTRACT_YEARS = 1.5

# undervaluation propensity: how strongly observable risk factors tilt the
# seeded choice of which players the market underprices
_PROP_BASE = -3.2
_PROP_DECLINE = 0.9
_PROP_RUNWAY = 1.0
_PROP_OFFPEAK = 0.8
_PROP_UNCERTAINTY = 0.7
_PROP_MEDIA = 1.2

_SYLLABLES = (
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
    "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
    "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
    "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
    "ta", "te", "ti", "to", "tu", "va", "ve", "vi", "vo", "vu",
)
_NATIONS = (
    "Argentina", "Belgium", "Brazil", "Croatia", "Denmark", "England", "France",
    "Germany", "Ghana", "Italy", "Japan", "Mexico", "Morocco", "Netherlands",
    "Nigeria", "Portugal", "Senegal", "Spain", "Uruguay", "Wales",
)
_CLUBS = (
    "Atletico Rojo", "Bayern Nord", "Celtic Vale", "Dynamo Ost", "Eagles United",
    "Forest Rovers", "Girona Azul", "Harbour City", "Inter Lago", "Juventud Real",
    "Kappa Athletic", "Lokomotiv West", "Marina FC", "Northbridge", "Olympia Sud",
)


@dataclass
class SynthConfig:
    n_players: int = 200
    weeks: int = 40
    embedding_dim: int = 16
    noise_sigma: float = 0.1
    text_signal_strength: float = 0.5
    mispricing_rate: float = 0.15
    seed: int = 0
    discount_min: float = 0.2
    discount_max: float = 0.5

    def validate(self) -> None:
        if self.n_players < 10:
            raise ValueError(f"n_players must be >= 10, got {self.n_players}")
        if self.weeks < 4:
            raise ValueError(f"weeks must be >= 4, got {self.weeks}")
        if self.embedding_dim < 2:
            raise ValueError(f"embedding_dim must be >= 2, got {self.embedding_dim}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.text_signal_strength <= 1:
            raise ValueError(f"text_signal_strength must be in [0, 1], got {self.text_signal_strength}")
        if not 0 < self.mispricing_rate < 1:
            raise ValueError(f"mispricing_rate must be in (0, 1), got {self.mispricing_rate}")
        if not 0 < self.discount_min <= self.discount_max < 1:
            raise ValueError(
                f"discounts must satisfy 0 < min <= max < 1, got [{self.discount_min}, {self.discount_max}]"
            )


@dataclass(frozen=True)
class PlayerTruth:
    player_id: str
    fair_values: tuple[tuple[date, float], ...]
    injected_discount: float
    true_undervalued: bool


@dataclass(frozen=True)
class GroundTruth:
    players: dict[str, PlayerTruth]


def _player_name(i: int) -> str:
    n = len(_SYLLABLES)
    a, rest = divmod(i, n * n)
    b, c = divmod(rest, n)
    first = (_SYLLABLES[a % n] + _SYLLABLES[b]).capitalize()
    last = (_SYLLABLES[b] + _SYLLABLES[c] + _SYLLABLES[a % n]).capitalize()
    return f"{first} {last} {i:05d}"


def _week_date(week: int) -> date:
    return GLOBAL_START + timedelta(days=7 * (week - 1))


def _substream(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag, index)))


@dataclass
class _Profile:
    """Structured draws for one player, made before discounts are assigned."""

    age_end: float
    height: float | None
    nation: str
    week_start: int
    week_end: int
    quality: float
    slope: float
    contract_start: date | None
    contract_expiry: date | None
    transfers: tuple[TransferEvent, ...]
    noise: np.ndarray
    uncertainty: float
    media_negativity: float


def _draw_profile(config: SynthConfig, i: int) -> _Profile:
    rng = _substream(config.seed, 1, i)
    weeks = config.weeks
    age_end = float(rng.uniform(18.0, 34.0))
    height = float(np.round(rng.normal(181.0, 7.0), 1))
    height_missing = rng.uniform() < 0.04
    nation = _NATIONS[int(rng.integers(0, len(_NATIONS)))]
    week_end = int(rng.integers(max(4, int(math.ceil(weeks * 0.4))), weeks + 1))
    window_len = int(rng.integers(max(4, week_end // 2), week_end + 1))
    week_start = week_end - window_len + 1
    quality = float(rng.normal())
    slope = float(rng.normal(0.0045 * (25.0 - age_end) / 8.0, _SLOPE_SD))
    uncertainty = float(rng.normal())
    media_negativity = float(rng.normal())

    contract_missing = rng.uniform() < 0.04
    expiry_offset = float(rng.uniform(-0.5, 3.5))
    duration = float(rng.uniform(1.2, 5.0))
    expiry = _week_date(week_end) + timedelta(days=int(expiry_offset * 365.25))
    start = expiry - timedelta(days=int(duration * 365.25))
    if contract_missing:
        start = expiry = None

    n_transfers = int(rng.integers(0, 4))
    transfer_weeks = sorted(
        int(rng.integers(max(1, week_start - 104), week_end + 1)) for _ in range(n_transfers)
    )
    transfers = []
    for tw in transfer_weeks:
        fee = float(np.round(math.exp(_LOG_BASE + _QUALITY_COEF * quality + rng.normal(0.0, 0.3))))
        cat = ("permanent", "loan", "free", "unknown")[int(rng.choice(4, p=[0.55, 0.25, 0.15, 0.05]))]
        clubs = rng.choice(len(_CLUBS), size=2, replace=False)
        transfers.append(
            TransferEvent(
                date=_week_date(tw) - timedelta(days=2),
                from_club=_CLUBS[int(clubs[0])],
                to_club=_CLUBS[int(clubs[1])],
                fee_eur=fee if cat in ("permanent", "loan") else None,
                category=cat,
            )
        )
    noise = rng.normal(0.0, config.noise_sigma * math.exp(0.45 * uncertainty), size=window_len)
    return _Profile(
        age_end=age_end,
        height=None if height_missing else height,
        nation=nation,
        week_start=week_start,
        week_end=week_end,
        quality=quality,
        slope=slope,
        contract_start=start,
        contract_expiry=expiry,
        transfers=tuple(transfers),
        noise=noise,
        uncertainty=uncertainty,
        media_negativity=media_negativity,
    )


def _propensity(profile: _Profile) -> float:
    """Undervaluation propensity from observable risk factors only."""
    decline = -profile.slope / _SLOPE_SD
    if profile.contract_expiry is not None:
        rem = max(0.0, (profile.contract_expiry - _week_date(profile.week_end)).days / 365.25)
    else:
        rem = _NEUTRAL_CONTRACT_YEARS
    runway = _NEUTRAL_CONTRACT_YEARS - min(rem, 3.0)
    offpeak = abs(profile.age_end - _AGE_PEAK) / _AGE_SCALE
    logit = (
        _PROP_BASE
        + _PROP_DECLINE * decline
        + _PROP_RUNWAY * runway
        + _PROP_OFFPEAK * offpeak
        + _PROP_UNCERTAINTY * profile.uncertainty
        + _PROP_MEDIA * profile.media_negativity
    )
    return 1.0 / (1.0 + math.exp(-logit))


def _core_log_value(profile: _Profile, week: int, weeks_total: int) -> float:
    """Deterministic fair log-value: age curve, trend, contract runway, quality,
    and an age x trend interaction that a linear model provably underfits."""
    when = _week_date(week)
    age_t = profile.age_end - (weeks_total - week) * 7.0 / 365.25
    if profile.contract_expiry is not None:
        rem_years = max(0.0, (profile.contract_expiry - when).days / 365.25)
    else:
        rem_years = _NEUTRAL_CONTRACT_YEARS
    offset = week - profile.week_start
    return (
        _LOG_BASE
        + _QUALITY_COEF * profile.quality
        - _AGE_COEF * ((age_t - _AGE_PEAK) / _AGE_SCALE) ** 2
        + profile.slope * offset
        + _CONTRACT_COEF * min(rem_years, 3.0)
        + _INTERACTION_COEF * profile.slope * (_AGE_PEAK - age_t) / _AGE_SCALE
    )


def _generate_raw(config: SynthConfig):
    """Deterministic raw streams: players, transfers kept on records, snapshots,
    articles (including sub-threshold ones), and the ground truth."""
    config.validate()
    n = config.n_players
    weeks = config.weeks
    strength = config.text_signal_strength
    end_date = _week_date(weeks)

    profiles = [_draw_profile(config, i) for i in range(n)]

    # exact-count seeded choice of the undervalued subset, tilted by propensity
    master = _substream(config.seed, 0, 0)
    n_discounted = int(round(config.mispricing_rate * n))
    weights = np.array([_propensity(p) for p in profiles])
    weights /= weights.sum()
    chosen = np.sort(master.choice(n, size=n_discounted, replace=False, p=weights))
    depths = master.uniform(config.discount_min, config.discount_max, size=n_discounted)
    discount_of = {int(idx): float(d) for idx, d in zip(chosen, depths)}

    players: list[PlayerRecord] = []
    snapshots: list[ValuationSnapshot] = []
    articles: list[ArticleFeatures] = []
    truths: dict[str, PlayerTruth] = {}

    for i, profile in enumerate(profiles):
        player_id = f"p{i:05d}"
        players.append(
            PlayerRecord(
                player_id=player_id,
                name=_player_name(i),
                birth_date=end_date - timedelta(days=int(profile.age_end * 365.25)),
                height_cm=profile.height,
                nationality=profile.nation,
                contract_start=profile.contract_start,
                contract_expiry=profile.contract_expiry,
                transfers=profile.transfers,
            )
        )

        d_i = discount_of.get(i, 0.0)
        fair_track = []
        for week in range(profile.week_start, profile.week_end + 1):
            when = _week_date(week)
            core = _core_log_value(profile, week, weeks)
            fair = math.exp(core + profile.noise[week - profile.week_start])
            # only the current snapshot is underpriced; history stays clean so
            # the gap never leaks into features computed from prior snapshots
            observed = fair * (1.0 - d_i) if week == profile.week_end else fair
            fair_track.append((when, fair))
            snapshots.append(ValuationSnapshot(player_id, when, observed))

        truths[player_id] = PlayerTruth(
            player_id=player_id,
            fair_values=tuple(fair_track),
            injected_discount=d_i,
            true_undervalued=d_i > 0,
        )

        rng_t = _substream(config.seed, 2, i)
        lam = float(rng_t.uniform(0.0, 9.0))
        n_articles = int(rng_t.poisson(lam))
        decline = -profile.slope / _SLOPE_SD
        # coverage tone tracks form; narrative dispersion tracks market uncertainty
        spread = 0.4 * (1.0 + 0.5 * strength * math.tanh(profile.uncertainty))
        for j in range(n_articles):
            art_week = int(rng_t.integers(profile.week_start, profile.week_end + 1))
            day = int(rng_t.integers(0, 7))
            hour = int(rng_t.integers(0, 24))
            z_sent = float(rng_t.normal())
            z_vec = rng_t.normal(size=config.embedding_dim)
            short = rng_t.uniform() < 0.03
            tokens = 2 if short else int(rng_t.integers(3, 400))
            sent = math.tanh(
                strength * (0.45 * profile.quality - 0.3 * decline - 0.6 * profile.media_negativity)
                + spread * z_sent
            )
            emb = 0.25 * z_vec
            emb[0] += 0.3 * strength * profile.quality
            emb[1] -= strength * (0.2 * decline + 0.4 * profile.media_negativity)
            when = _week_date(art_week) + timedelta(days=day)
            published = datetime(when.year, when.month, when.day, hour, tzinfo=timezone.utc)
            articles.append(
                ArticleFeatures(
                    article_id=f"a{i:05d}x{j:03d}",
                    player_id=player_id,
                    published_at=published,
                    sentiment=sent,
                    embedding=tuple(float(x) for x in emb),
                    token_count=tokens,
                )
            )

    return players, snapshots, articles, GroundTruth(truths)


def generate(config: SynthConfig):
    """Generate a Dataset plus its GroundTruth, reproducible from the seed."""
    players, snapshots, articles, truth = _generate_raw(config)
    dataset, orphans = assemble(players, snapshots, articles)
    assert not orphans
    return dataset, truth


def write_ground_truth(truth: GroundTruth, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player_id", "timestamp", "fair_value_eur", "injected_discount", "true_undervalued"])
        for player_id in sorted(truth.players):
            t = truth.players[player_id]
            for when, fair in t.fair_values:
                writer.writerow(
                    [player_id, when.isoformat(), repr(fair), repr(t.injected_discount), int(t.true_undervalued)]
                )


def read_ground_truth(path) -> GroundTruth:
    rows: dict[str, list] = {}
    meta: dict[str, tuple[float, bool]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            pid = row["player_id"]
            rows.setdefault(pid, []).append((date.fromisoformat(row["timestamp"]), float(row["fair_value_eur"])))
            meta[pid] = (float(row["injected_discount"]), row["true_undervalued"] == "1")
    players = {
        pid: PlayerTruth(pid, tuple(track), meta[pid][0], meta[pid][1]) for pid, track in rows.items()
    }
    return GroundTruth(players)


def write_synth(config: SynthConfig, out_dir):
    """Generate and write the canonical ingest files plus ground_truth.csv.

    Raw article streams are written before token filtering so ingestion gets to
    exercise the filter; the returned Dataset is the assembled (filtered) view.
    """
    players, snapshots, articles, truth = _generate_raw(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_players(players, out / "players.csv")
    write_transfers(players, out / "transfers.csv")
    write_valuations(snapshots, out / "valuations.csv")
    write_articles(articles, out / "articles.jsonl")
    write_ground_truth(truth, out / "ground_truth.csv")
    dataset, _ = assemble(players, snapshots, articles)
    return dataset, truth


def score_against_truth(shortlist_entries, truth: GroundTruth, k: int) -> float:
    """Fraction of the top-k shortlist entries that are truly undervalued."""
    if k > len(shortlist_entries):
        raise ValueError(f"k={k} exceeds shortlist length {len(shortlist_entries)}")
    hits = 0
    for player_id, _ in shortlist_entries[:k]:
        t = truth.players.get(player_id)
        if t is not None and t.true_undervalued:
            hits += 1
    return hits / k
