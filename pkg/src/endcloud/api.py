"""HTTP surface over a Gateway.

All score fields are rendered at 3 decimals here; the event log keeps
full precision. CORS is open so a browser console served elsewhere can
call the API; when the configured auth token environment variable is set,
every endpoint requires it as a bearer token.
"""

from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (
    BackendError,
    EccError,
    IllegalTransitionError,
    UnknownRecordError,
)
from .evolution import EvolutionRecord
from .gateway import ChatRequest, ChatResponse, Gateway


class ChatBody(BaseModel):
    session_id: str = "default"
    message: str


class FeedbackBody(BaseModel):
    record_id: str
    verdict: str


class VerdictBody(BaseModel):
    verdict: str


def _chat_response_dict(response: ChatResponse) -> dict:
    return {
        "record_id": response.record_id,
        "reply": response.reply,
        "served_by": response.served_by,
        "breakdown": response.breakdown.rounded(3) if response.breakdown else None,
        "latency_ms": response.latency_ms,
    }


def _record_dict(record: EvolutionRecord) -> dict:
    out = record.to_dict()
    if record.breakdown is not None:
        out["breakdown"] = record.breakdown.rounded(3)
    return out


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="end-cloud gateway", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    token_env = gateway.cfg.auth_token_env

    def required_token() -> Optional[str]:
        return os.environ.get(token_env) if token_env else None

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = required_token()
        if token:
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse({"error": "missing or bad token"}, status_code=401)
        return await call_next(request)

    @app.exception_handler(EccError)
    async def ecc_error(request: Request, exc: EccError):
        status = 400
        if isinstance(exc, UnknownRecordError):
            status = 404
        elif isinstance(exc, IllegalTransitionError):
            status = 409
        elif isinstance(exc, BackendError):
            status = 502
        return JSONResponse(
            {"error": str(exc), "kind": type(exc).__name__}, status_code=status
        )

    @app.post("/v1/chat")
    def chat(body: ChatBody) -> dict:
        response = gateway.handle_chat(
            ChatRequest(session_id=body.session_id, message=body.message)
        )
        return _chat_response_dict(response)

    @app.post("/v1/feedback")
    def feedback(body: FeedbackBody) -> dict:
        state = gateway.handle_feedback(body.record_id, body.verdict)
        return {"record_id": body.record_id, "state": state}

    @app.post("/v1/review/{record_id}")
    def review_verdict(record_id: str, body: VerdictBody) -> dict:
        state = gateway.handle_feedback(record_id, body.verdict)
        return {"record_id": record_id, "state": state}

    @app.get("/v1/review/queue")
    def review_queue(page: int = 1, page_size: int = 20) -> dict:
        items, total = gateway.review_queue(page, page_size)
        return {
            "items": [_record_dict(r) for r in items],
            "total": total,
            "page": page,
            "page_size": page_size,
        }

    @app.get("/v1/metrics")
    def metrics() -> dict:
        out = gateway.metrics().as_dict()
        out["mean_final"] = round(out["mean_final"], 3)
        out["escalation_rate"] = round(out["escalation_rate"], 6)
        return out

    @app.get("/v1/records/{record_id}")
    def get_record(record_id: str) -> dict:
        return _record_dict(gateway.get_record(record_id))

    return app
