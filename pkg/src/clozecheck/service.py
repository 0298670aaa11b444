"""HTTP probe service: paged claims, masking, cloze predictions, and
persistent verdict sessions, under the versioned path prefix /v1.

Gold labels are hidden from claim listings (blind protocol) and revealed
only in the response to a submitted verdict. Sessions are append-only
record files, one per session: crash-safe and auditable. All errors use
the envelope {"error": {"code", "message"}}.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .cloze import ClozeBackend, ClozeBackendError
from .core import Claim, LabelParseError, MaskStrategy, parse_label
from .dataset import ClaimSet
from .masking import (
    MaskingError,
    NerBackend,
    apply_manual_mask,
    mask_last_entity,
    mask_last_token,
    tokenize_surface,
)

_SESSION_ID_RE = re.compile(r"^[0-9a-f]{32}$")


class ServiceError(Exception):
    """Carries an HTTP status plus a machine-readable error code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class SessionStore:
    """One append-only JSONL file per session; mutation is atomic per
    session via a lock, so tallies survive service restarts."""

    def __init__(self, directory: Path | str):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[session_id]

    def _path(self, session_id: str) -> Path:
        if not _SESSION_ID_RE.match(session_id):
            raise ServiceError(404, "session_not_found", "unknown session id")
        return self._dir / f"{session_id}.jsonl"

    def create(self) -> str:
        session_id = uuid.uuid4().hex
        record = {
            "type": "created",
            "session_id": session_id,
            "timestamp": time.time(),
        }
        with self._lock(session_id):
            with open(self._path(session_id), "w", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        return session_id

    def exists(self, session_id: str) -> bool:
        return _SESSION_ID_RE.match(session_id) is not None and self._path(
            session_id
        ).exists()

    def read(self, session_id: str) -> List[Dict]:
        path = self._path(session_id)
        if not path.exists():
            raise ServiceError(404, "session_not_found", "unknown session id")
        records = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(json.loads(line))
        return records

    def append(self, session_id: str, record: Dict) -> List[Dict]:
        """Append one record and return the full updated record list."""
        with self._lock(session_id):
            path = self._path(session_id)
            if not path.exists():
                raise ServiceError(404, "session_not_found", "unknown session id")
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        return self.read(session_id)


def session_tally(records: List[Dict]) -> Dict:
    """Running accuracy over gold-labeled verdicts; verdicts on unlabeled
    claims are logged but never move the tally."""
    verdict_count = 0
    gold_labeled = 0
    correct = 0
    for record in records:
        if record.get("type") != "verdict":
            continue
        verdict_count += 1
        if record.get("gold") is not None:
            gold_labeled += 1
            if record.get("correct"):
                correct += 1
    return {
        "verdict_count": verdict_count,
        "gold_labeled_count": gold_labeled,
        "correct_count": correct,
        "accuracy": (correct / gold_labeled) if gold_labeled else 0.0,
    }


class MaskRequest(BaseModel):
    claim_id: int
    strategy: str = MaskStrategy.MANUAL.value
    token_index: Optional[int] = None
    session_id: Optional[str] = None


class PredictRequest(BaseModel):
    masked_text: str
    k: int = Field(default=1, ge=1, le=50)
    claim_id: Optional[int] = None
    session_id: Optional[str] = None


class VerdictRequest(BaseModel):
    claim_id: int
    verdict: str


def _claim_summary(claim: Claim) -> Dict:
    return {
        "id": claim.id,
        "text": claim.text,
        "has_gold": claim.gold_label is not None,
    }


def create_app(
    claimsets: Dict[str, ClaimSet],
    backend: ClozeBackend,
    session_dir: Path | str,
    ner: Optional[NerBackend] = None,
    default_split: Optional[str] = None,
) -> FastAPI:
    """Wire the probe API around loaded claim splits, a cloze backend, and a
    session store. Backends that declare concurrency_safe false are called
    under a serializing lock."""
    if not claimsets:
        raise ValueError("need at least one claim split to serve")
    app = FastAPI(title="cloze probe service", docs_url=None, redoc_url=None)
    # the browser probe page may be served from any local origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(session_dir)
    splits = dict(claimsets)
    first_split = default_split or next(iter(splits))
    backend_gate = threading.Lock()
    by_id: Dict[str, Dict[int, Claim]] = {
        name: {claim.id: claim for claim in claimset}
        for name, claimset in splits.items()
    }

    def error_response(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(
            status_code=status,
            content={"error": {"code": code, "message": message}},
        )

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        return error_response(exc.status_code, "http_error", str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return error_response(422, "validation_error", str(exc.errors()))

    def get_split(name: Optional[str]) -> ClaimSet:
        split = name or first_split
        if split not in splits:
            raise ServiceError(404, "unknown_split", f"unknown split {split!r}")
        return splits[split]

    def get_claim(claim_id: int, split: Optional[str]) -> Claim:
        split_name = split or first_split
        if split_name not in by_id:
            raise ServiceError(404, "unknown_split", f"unknown split {split_name!r}")
        claim = by_id[split_name].get(claim_id)
        if claim is None:
            for other in by_id.values():
                if claim_id in other:
                    claim = other[claim_id]
                    break
        if claim is None:
            raise ServiceError(404, "claim_not_found", f"no claim {claim_id}")
        return claim

    def query_backend(masked_text: str, k: int):
        try:
            if backend.concurrency_safe:
                return backend.query_topk(masked_text, k)
            with backend_gate:
                return backend.query_topk(masked_text, k)
        except ClozeBackendError as exc:
            raise ServiceError(502, "backend_error", str(exc)) from exc

    @app.get("/v1/claims")
    def list_claims(
        split: Optional[str] = None, offset: int = 0, limit: int = 20
    ):
        if offset < 0:
            raise ServiceError(400, "bad_offset", "offset must be nonnegative")
        if not 1 <= limit <= 100:
            raise ServiceError(400, "bad_limit", "limit must be in 1..100")
        claimset = get_split(split)
        page = claimset.claims[offset : offset + limit]
        return {
            "split": claimset.split_name,
            "total": len(claimset),
            "offset": offset,
            "limit": limit,
            "claims": [_claim_summary(c) for c in page],
        }

    @app.get("/v1/claims/{claim_id}")
    def get_claim_detail(claim_id: int, split: Optional[str] = None):
        claim = get_claim(claim_id, split)
        tokens = [
            {"text": t.text, "start": t.start, "end": t.end}
            for t in tokenize_surface(claim.text)
        ]
        summary = _claim_summary(claim)
        summary["tokens"] = tokens
        return summary

    @app.post("/v1/mask")
    def mask_claim(request: MaskRequest):
        claim = get_claim(request.claim_id, None)
        try:
            strategy = MaskStrategy(request.strategy)
        except ValueError:
            raise ServiceError(
                400, "bad_strategy", f"unknown strategy {request.strategy!r}"
            ) from None
        try:
            if strategy is MaskStrategy.LAST_TOKEN:
                masked = mask_last_token(claim)
            elif strategy is MaskStrategy.LAST_ENTITY:
                if ner is None:
                    raise ServiceError(
                        400,
                        "ner_unavailable",
                        "no entity recognizer configured for this service",
                    )
                masked = mask_last_entity(claim, ner)
            else:
                if request.token_index is None:
                    raise ServiceError(
                        400,
                        "missing_token_index",
                        "manual masking requires token_index",
                    )
                masked = apply_manual_mask(claim, request.token_index)
        except MaskingError as exc:
            raise ServiceError(400, "unmaskable", str(exc)) from exc
        response = {
            "claim_id": claim.id,
            "masked_text": masked.masked_text,
            "gold_token": masked.gold_token,
            "mask_char_span": list(masked.mask_char_span),
            "strategy": masked.strategy.value,
            "fallback_used": masked.fallback_used,
        }
        if request.session_id is not None and store.exists(request.session_id):
            store.append(
                request.session_id,
                {
                    "type": "probe_mask",
                    "claim_id": claim.id,
                    "mask_char_span": list(masked.mask_char_span),
                    "strategy": masked.strategy.value,
                    "timestamp": time.time(),
                },
            )
        return response

    @app.post("/v1/predict")
    def predict_mask(request: PredictRequest):
        predictions = query_backend(request.masked_text, request.k)
        response = {
            "predictions": [
                {"token": p.token, "score": p.score, "rank": p.rank}
                for p in predictions
            ]
        }
        if request.session_id is not None and store.exists(request.session_id):
            store.append(
                request.session_id,
                {
                    "type": "probe_predict",
                    "claim_id": request.claim_id,
                    "masked_text": request.masked_text,
                    "k": request.k,
                    "shown": [p.token for p in predictions],
                    "timestamp": time.time(),
                },
            )
        return response

    @app.post("/v1/sessions", status_code=201)
    def create_session():
        return {"session_id": store.create()}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        records = store.read(session_id)
        tally = session_tally(records)
        return {"session_id": session_id, "records": records, **tally}

    @app.post("/v1/sessions/{session_id}/verdicts")
    def submit_verdict(session_id: str, request: VerdictRequest):
        if not store.exists(session_id):
            raise ServiceError(404, "session_not_found", "unknown session id")
        try:
            verdict = parse_label(request.verdict)
        except LabelParseError as exc:
            raise ServiceError(400, "bad_verdict", str(exc)) from exc
        claim = get_claim(request.claim_id, None)
        gold = claim.gold_label
        correct = None if gold is None else (verdict is gold)
        record = {
            "type": "verdict",
            "claim_id": claim.id,
            "verdict": verdict.serialize(),
            "gold": gold.serialize() if gold else None,
            "correct": correct,
            "timestamp": time.time(),
        }
        records = store.append(session_id, record)
        tally = session_tally(records)
        return {
            "session_id": session_id,
            "claim_id": claim.id,
            "verdict": verdict.serialize(),
            "gold": gold.serialize() if gold else None,
            "correct": correct,
            **tally,
        }

    return app
