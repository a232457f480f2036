"""Read-only HTTP service over precomputed pipeline artifacts.

The whole state directory loads into one immutable snapshot; /refresh builds a
new snapshot off the request path and swaps it in atomically, so readers never
observe a partial update and a failed refresh leaves the old state serving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import __version__, manifest, mispricing, pipeline
from .errors import StateError
from .explain import Attribution, attribution_to_dict, read_attributions_jsonl

RESPONSE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ServingState:
    """Immutable snapshot of everything the endpoints read."""

    manifest: dict
    threshold: mispricing.ThresholdSpec
    shortlist_entries: tuple[tuple[str, float], ...]
    mispricing_by_player: dict[str, float]
    trajectories: dict[str, tuple[dict, ...]]
    attributions: dict[str, Attribution]
    known_players: frozenset = field(default_factory=frozenset)


def load_serving_state(state_dir) -> ServingState:
    state = Path(state_dir)
    loaded = pipeline.load_state(state)  # validates the model artifacts
    try:
        man = manifest.read_manifest(state / pipeline.TRAIN_MANIFEST)
    except FileNotFoundError:
        man = {}

    reports_path = state / pipeline.MISPRICING_JSONL
    if not reports_path.exists():
        raise StateError(f"mispricing reports not found: {reports_path}; run score first")
    reports = mispricing.read_reports_jsonl(reports_path)
    trajectories: dict[str, list[dict]] = {}
    for r in sorted(reports, key=lambda r: (r.player_id, r.asof)):
        trajectories.setdefault(r.player_id, []).append(mispricing.report_to_dict(r))

    prob_path = state / pipeline.PROBABILITIES_FILE
    if not prob_path.exists():
        raise StateError(f"probabilities not found: {prob_path}; run score first")
    probabilities = pipeline.read_probabilities(prob_path)
    ranked = mispricing.shortlist(probabilities, max(1, len(probabilities)))

    attributions: dict[str, Attribution] = {}
    att_path = state / pipeline.ATTRIBUTIONS_JSONL
    if att_path.exists():
        for att in read_attributions_jsonl(att_path):
            attributions[att.player_id] = att

    return ServingState(
        manifest=man,
        threshold=loaded.threshold,
        shortlist_entries=tuple(ranked),
        mispricing_by_player=pipeline.latest_mispricing(reports),
        trajectories={pid: tuple(t) for pid, t in trajectories.items()},
        attributions=attributions,
        known_players=frozenset(trajectories),
    )


def create_app(state_dir) -> FastAPI:
    app = FastAPI(title="scoutval", version=__version__)
    app.state.state_dir = Path(state_dir)
    app.state.serving = load_serving_state(state_dir)

    def snapshot(request: Request) -> ServingState:
        return request.app.state.serving

    @app.get("/health")
    def health(request: Request):
        snap = snapshot(request)
        return {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "status": "ok",
            "players": len(snap.known_players),
            "manifest": snap.manifest,
        }

    @app.get("/shortlist")
    def get_shortlist(request: Request, k: str = "10"):
        snap = snapshot(request)
        try:
            k_int = int(k)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"k must be an integer, got {k!r}")
        if k_int < 1:
            raise HTTPException(status_code=400, detail=f"k must be >= 1, got {k_int}")
        entries = snap.shortlist_entries[:k_int]
        return {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "k": k_int,
            "entries": [
                {
                    "rank": rank,
                    "player_id": player_id,
                    "probability": prob,
                    "mispricing": snap.mispricing_by_player.get(player_id),
                }
                for rank, (player_id, prob) in enumerate(entries, start=1)
            ],
        }

    @app.get("/players/{player_id}/mispricing")
    def get_mispricing(request: Request, player_id: str):
        snap = snapshot(request)
        if player_id not in snap.trajectories:
            raise HTTPException(status_code=404, detail=f"unknown player id {player_id!r}")
        return {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "player_id": player_id,
            "tau": snap.threshold.tau,
            "trajectory": list(snap.trajectories[player_id]),
        }

    @app.get("/players/{player_id}/explanation")
    def get_explanation(request: Request, player_id: str):
        snap = snapshot(request)
        att = snap.attributions.get(player_id)
        if att is None:
            raise HTTPException(status_code=404, detail=f"no explanation for player id {player_id!r}")
        return {"schema_version": RESPONSE_SCHEMA_VERSION, **attribution_to_dict(att)}

    @app.post("/refresh")
    def refresh(request: Request):
        try:
            fresh = load_serving_state(request.app.state.state_dir)
        except Exception as exc:
            return JSONResponse(
                status_code=500,
                content={
                    "schema_version": RESPONSE_SCHEMA_VERSION,
                    "status": "refresh failed; previous state still serving",
                    "error": str(exc),
                },
            )
        request.app.state.serving = fresh  # single reference assignment: atomic swap
        return {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "status": "reloaded",
            "players": len(fresh.known_players),
        }

    return app
