"""Read-only HTTP facade for the explorer UI.

Serves incidence tables and analysis artifacts over JSON. Analyses are
deduplicated by content-addressed id: posting the same request twice
returns the same handle, and completed artifacts are stored as frozen
bytes so repeated GETs are byte-identical. Small analyses run inline;
large ones run on a worker thread with a ``running`` status in between.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Literal

import requests
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import RunConfig
from .errors import AeskError, NoResults, NotFound, UnknownTerm, UpstreamError
from .ingest import IncidenceTable, table_to_dict
from .pipeline import build_store, compute_analysis_id, load_table, run_analysis
from .visuals import artifacts_json_bytes


class PriorSpec(BaseModel):
    alpha: float = Field(0.5, gt=0)
    beta: float = Field(0.5, gt=0)


class ClusterSpec(BaseModel):
    min_cluster_size: int = Field(3, ge=1)
    epsilon: float | None = Field(None, gt=0)


class EmbeddingSpec(BaseModel):
    source: Literal["fallback", "file"] = "fallback"
    path: str | None = None
    dimension: int = Field(32, ge=8)
    seed: int = 0


class AnalysisRequest(BaseModel):
    study_id: str
    prior: PriorSpec = PriorSpec()
    cluster: ClusterSpec = ClusterSpec()
    descriptors: list[str] = []
    embedding: EmbeddingSpec = EmbeddingSpec()
    evd_include_noise: bool = False


@dataclass
class AnalysisEntry:
    analysis_id: str
    status: str  # running | done | failed
    created_at: str
    body: bytes | None = None
    error: str | None = None


@dataclass
class AnalysisStore:
    """One computation per analysis id; concurrent posts coalesce."""

    entries: dict[str, AnalysisEntry] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, analysis_id: str) -> AnalysisEntry | None:
        with self.lock:
            return self.entries.get(analysis_id)

    def get_or_create(
        self, analysis_id: str, run: Callable[[], bytes], sync: bool
    ) -> AnalysisEntry:
        with self.lock:
            entry = self.entries.get(analysis_id)
            if entry is not None:
                return entry
            entry = AnalysisEntry(
                analysis_id,
                "running",
                datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            )
            self.entries[analysis_id] = entry
        if sync:
            self._execute(entry, run)
        else:
            threading.Thread(target=self._execute, args=(entry, run), daemon=True).start()
        return entry

    def _execute(self, entry: AnalysisEntry, run: Callable[[], bytes]) -> None:
        try:
            entry.body = run()
            entry.status = "done"
        except Exception as exc:
            entry.error = str(exc)
            entry.status = "failed"


def _handle_payload(entry: AnalysisEntry) -> dict:
    return {
        "analysis_id": entry.analysis_id,
        "status": entry.status,
        "created_at": entry.created_at,
    }


def create_app(
    cfg: RunConfig,
    before_run: Callable[[], None] | None = None,
) -> FastAPI:
    """Build the service app around a base RunConfig.

    ``before_run`` is a test seam invoked at the start of every analysis
    computation (e.g. to observe the running state).
    """
    app = FastAPI(title="aesk review service", version=__version__)
    store = AnalysisStore()
    table_cache: dict[str, IncidenceTable] = {}
    table_lock = threading.Lock()

    def get_table(study_id: str) -> IncidenceTable:
        with table_lock:
            hit = table_cache.get(study_id)
        if hit is not None:
            return hit
        table = load_table(study_id, cfg)
        with table_lock:
            table_cache[study_id] = table
        return table

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/studies")
    def studies():
        from pathlib import Path

        cache = Path(cfg.cache_dir)
        ids = sorted(p.stem for p in cache.glob("NCT*.json")) if cache.is_dir() else []
        return {"studies": ids}

    @app.get("/studies/{study_id}/incidence")
    def incidence(study_id: str):
        try:
            table = get_table(study_id)
        except (NotFound, NoResults, ValueError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=404)
        except (UpstreamError, requests.RequestException) as exc:
            return JSONResponse(
                {"detail": f"registry fetch failed: {exc}"},
                status_code=502,
                headers={"Retry-After": "30"},
            )
        return table_to_dict(table)

    @app.post("/analyses")
    def post_analysis(request: AnalysisRequest):
        overrides = {
            "alpha": request.prior.alpha,
            "beta": request.prior.beta,
            "min_cluster_size": request.cluster.min_cluster_size,
            "epsilon": request.cluster.epsilon,
            "descriptors": tuple(request.descriptors),
            "evd_include_noise": request.evd_include_noise,
        }
        if request.embedding.source == "file":
            if not request.embedding.path:
                return JSONResponse(
                    {"detail": "embedding.source 'file' requires embedding.path"},
                    status_code=422,
                )
            overrides["embedding_path"] = request.embedding.path
        else:
            overrides["embedding_path"] = None
            overrides["embedding_dimension"] = request.embedding.dimension
            overrides["fallback_seed"] = request.embedding.seed
        run_cfg = replace(cfg, **overrides)

        try:
            table = get_table(request.study_id)
            emb_store = build_store(run_cfg)
        except (NotFound, NoResults, ValueError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=404)
        except FileNotFoundError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)
        except (UpstreamError, requests.RequestException) as exc:
            return JSONResponse(
                {"detail": f"registry fetch failed: {exc}"},
                status_code=502,
                headers={"Retry-After": "30"},
            )

        analysis_id = compute_analysis_id(table, run_cfg, emb_store)

        def run() -> bytes:
            if before_run is not None:
                before_run()
            result = run_analysis(table, run_cfg, emb_store)
            return artifacts_json_bytes(result.artifacts)

        sync = len(table.rows) <= cfg.sync_threshold
        entry = store.get_or_create(analysis_id, run, sync)
        return _handle_payload(entry)

    @app.get("/analyses/{analysis_id}")
    def analysis_status(analysis_id: str):
        entry = store.get(analysis_id)
        if entry is None:
            return JSONResponse({"detail": "unknown analysis id"}, status_code=404)
        return _handle_payload(entry)

    @app.get("/analyses/{analysis_id}/artifacts")
    def analysis_artifacts(analysis_id: str):
        entry = store.get(analysis_id)
        if entry is None:
            return JSONResponse({"detail": "unknown analysis id"}, status_code=404)
        if entry.status == "running":
            return JSONResponse(_handle_payload(entry), status_code=409)
        if entry.status == "failed":
            payload = _handle_payload(entry)
            payload["detail"] = entry.error
            return JSONResponse(payload, status_code=500)
        return Response(content=entry.body, media_type="application/json")

    return app


def serve(cfg: RunConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=cfg.bind, port=cfg.port, log_level="info")
