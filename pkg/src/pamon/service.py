"""HTTP enforcement service.

Thin JSON layer over a PolicyEngine: decisions are synchronous, the
engine fsyncs each decision to its instance log before the response
leaves, and error causes map onto status codes (422 undeclared or
malformed fields, 404 unknown instance or purpose, 409 lifecycle
conflicts, 400 rejected policy text).
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .monitor import MonitorError
from .policy import PolicyError, Request, UndeclaredEntityError
from .runtime import PolicyEngine

__all__ = ["create_app"]


class RequestBody(BaseModel):
    wid: str
    subject: str
    task: str
    owner: str
    purpose: str


class PolicyBody(BaseModel):
    text: str


def _field_422(field: str, msg: str) -> HTTPException:
    return HTTPException(
        status_code=422,
        detail=[{"loc": ["body", field], "msg": msg, "type": "value_error"}],
    )


def create_app(engine: PolicyEngine) -> FastAPI:
    app = FastAPI(title="purpose-aware policy engine")

    @app.post("/v1/requests")
    def submit(body: RequestBody) -> dict:
        r = Request(body.wid, body.subject, body.task, body.owner, body.purpose)
        try:
            rec = engine.submit(r)
        except UndeclaredEntityError as e:
            raise _field_422(e.field, str(e))
        except MonitorError as e:
            raise HTTPException(status_code=409, detail=str(e))
        except PolicyError as e:
            raise _field_422("wid", str(e))
        return {
            "decision": rec.decision.value,
            "verdict": rec.verdict.value,
            "coarse": rec.coarse,
            "seq": rec.seq,
        }

    @app.get("/v1/instances/{wid}")
    def instance(wid: str) -> dict:
        try:
            s = engine.instance(wid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown instance: {wid!r}")
        return {
            "trace": [
                {
                    "wid": r.wid,
                    "subject": r.subject,
                    "task": r.task,
                    "owner": r.owner,
                    "purpose": r.purpose,
                }
                for r in s.trace.requests
            ],
            "verdict": s.cached_verdict.value,
            "frozen": s.frozen,
        }

    @app.post("/v1/instances/{wid}/close")
    def close(wid: str) -> dict:
        try:
            s = engine.close(wid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown instance: {wid!r}")
        except MonitorError as e:
            raise HTTPException(status_code=409, detail=str(e))
        return {"verdict": s.cached_verdict.value, "frozen": s.frozen}

    @app.put("/v1/policy")
    def replace_policy(body: PolicyBody) -> dict:
        try:
            version = engine.reload_text(body.text)
        except PolicyError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"version": version}

    @app.get("/v1/purposes/{purpose}/achievable")
    def achievable(purpose: str) -> dict:
        try:
            res = engine.achievable(purpose)
        except UndeclaredEntityError as e:
            raise HTTPException(status_code=404, detail=str(e))
        return {
            "achievable": res.achievable,
            "witness": [
                {
                    "wid": r.wid,
                    "subject": r.subject,
                    "task": r.task,
                    "owner": r.owner,
                    "purpose": r.purpose,
                }
                for r in res.witness
            ],
        }

    return app
