"""HTTP service exposing the triage pipeline under /v1.

Cases live on disk: one directory per case holding the original image
and a canonical case.json, plus an index file for cheap listing. Every
write goes through write-then-rename so a crash never leaves a partial
record, and per-case locks serialize concurrent mutations. Restarting
the service over the same data directory serves identical records.
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from . import reporting
from .ensemble import EnsembleDecision, average_distribution, vote
from .errors import (
    BackendError,
    ConfigurationError,
    DermTriageError,
    InputError,
    ParseError,
    ProviderError,
    TransportError,
)
from .imaging import NlmParams, denoise_nlm, equalize_histogram, resize
from .inference import predict_all
from .llmclient import LlmConfig
from .metrics import parse_prediction_lines, rates_table, summarize

__all__ = [
    "CaseRecord",
    "CaseStore",
    "ServiceConfig",
    "create_app",
]

MAX_UPLOAD_BYTES = 10 * 1024 * 1024

STATUS_CLASSIFIED = "classified"
STATUS_REPORTED = "reported"
STATUS_FLAGGED = "flagged_for_review"

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def _utc_now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="microseconds")


@dataclass
class CaseRecord:
    """Everything the service knows about one uploaded case."""

    case_id: str
    image_ref: str
    decision: dict
    average_distribution: dict
    status: str
    created_at: str
    updated_at: str
    report: dict | None = None
    chat_history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "case_id": self.case_id,
            "image_ref": self.image_ref,
            "decision": dict(self.decision),
            "average_distribution": dict(self.average_distribution),
            "status": self.status,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "report": dict(self.report) if self.report else None,
            "chat_history": [dict(turn) for turn in self.chat_history],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            case_id=data["case_id"],
            image_ref=data["image_ref"],
            decision=dict(data["decision"]),
            average_distribution=dict(data["average_distribution"]),
            status=data["status"],
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            report=dict(data["report"]) if data.get("report") else None,
            chat_history=[dict(turn) for turn in data.get("chat_history", [])],
        )


def _atomic_write(path, text):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class CaseStore:
    """Directory-backed store with atomic writes and per-case locks."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.cases_dir = self.root / "cases"
        self.cases_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.jsonl"
        self._index_lock = threading.Lock()
        self._locks_guard = threading.Lock()
        self._case_locks = {}

    def lock(self, case_id):
        with self._locks_guard:
            if case_id not in self._case_locks:
                self._case_locks[case_id] = threading.Lock()
            return self._case_locks[case_id]

    def _case_path(self, case_id):
        return self.cases_dir / case_id / "case.json"

    def exists(self, case_id):
        return self._case_path(case_id).is_file()

    def get(self, case_id):
        path = self._case_path(case_id)
        if not path.is_file():
            raise KeyError(case_id)
        with open(path, "r", encoding="utf-8") as handle:
            return CaseRecord.from_dict(json.load(handle))

    def save_new(self, record, image_bytes, image_ext):
        case_dir = self.cases_dir / record.case_id
        case_dir.mkdir(parents=True, exist_ok=False)
        image_path = case_dir / f"image.{image_ext}"
        image_path.write_bytes(image_bytes)
        record.image_ref = str(image_path.relative_to(self.root))
        _atomic_write(
            self._case_path(record.case_id),
            json.dumps(record.to_dict(), indent=2, sort_keys=True),
        )
        self._update_index(record)

    def save(self, record):
        record.updated_at = _utc_now_iso()
        _atomic_write(
            self._case_path(record.case_id),
            json.dumps(record.to_dict(), indent=2, sort_keys=True),
        )
        self._update_index(record)

    def _read_index(self):
        if not self.index_path.is_file():
            return []
        rows = []
        with open(self.index_path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        return rows

    def _update_index(self, record):
        # The index keeps insertion order; listing reverses it so the
        # newest case comes first even when timestamps collide.
        entry = {
            "case_id": record.case_id,
            "created_at": record.created_at,
            "updated_at": record.updated_at,
            "status": record.status,
        }
        with self._index_lock:
            rows = self._read_index()
            for i, row in enumerate(rows):
                if row["case_id"] == record.case_id:
                    rows[i] = entry
                    break
            else:
                rows.append(entry)
            text = "".join(json.dumps(row) + "\n" for row in rows)
            _atomic_write(self.index_path, text)

    def list(self, status=None):
        with self._index_lock:
            rows = self._read_index()
        if status is not None:
            rows = [row for row in rows if row["status"] == status]
        return list(reversed(rows))


@dataclass
class ServiceConfig:
    """Wiring for the service: backends, preprocessing, storage, LLM."""

    backends: list = field(default_factory=list)
    ensemble_size: int = 3
    data_dir: str = "./dermtriage-data"
    denoise: bool = True
    nlm: NlmParams = field(default_factory=NlmParams)
    equalize: bool = True
    image_size: int = 224
    max_upload_bytes: int = MAX_UPLOAD_BYTES
    llm: LlmConfig | None = None
    llm_transport: object = None
    llm_concurrency: int = 4
    chat_window: int = reporting.CHAT_WINDOW

    @classmethod
    def from_env(cls, env=None, **overrides):
        env = os.environ if env is None else env
        kwargs = {}
        if env.get("DERMTRIAGE_DATA_DIR"):
            kwargs["data_dir"] = env["DERMTRIAGE_DATA_DIR"]
        if env.get("LLM_BASE_URL"):
            kwargs["llm"] = LlmConfig.from_env(env)
        kwargs.update(overrides)
        return cls(**kwargs)


class ChatBody(BaseModel):
    query: str


def _sniff_format(data):
    if data.startswith(_PNG_MAGIC):
        return "png"
    if data.startswith(_JPEG_MAGIC):
        return "jpg"
    return None


def _decode_image(data):
    with Image.open(io.BytesIO(data)) as handle:
        converted = handle.convert("RGB")
        return np.asarray(converted, dtype=np.float64) / 255.0


def _http_error(status, detail):
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(config=None):
    """Build the FastAPI app around a ServiceConfig."""
    if config is None:
        config = ServiceConfig.from_env()
    app = FastAPI(title="dermtriage", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = CaseStore(config.data_dir)
    llm_semaphore = threading.Semaphore(config.llm_concurrency)
    app.state.store = store
    app.state.config = config

    def _preprocess(arr):
        if config.denoise:
            arr = denoise_nlm(arr, config.nlm)
        if config.equalize:
            arr = equalize_histogram(arr)
        return resize(arr, config.image_size, config.image_size)

    def _llm_call(fn):
        if config.llm is None:
            return _http_error(503, "LLM is not configured")
        with llm_semaphore:
            try:
                return fn()
            except ConfigurationError as exc:
                return _http_error(503, str(exc))
            except (TransportError, ProviderError) as exc:
                return _http_error(502, str(exc))

    @app.post("/v1/cases", status_code=201)
    async def create_case(request: Request):
        body = await request.body()
        if len(body) > config.max_upload_bytes:
            return _http_error(413, "image exceeds the upload size limit")
        ext = _sniff_format(body)
        if ext is None:
            return _http_error(415, "only PNG and JPEG images are accepted")
        try:
            arr = _decode_image(body)
        except Exception:
            return _http_error(415, "image could not be decoded")
        try:
            processed = _preprocess(arr)
            predictions = predict_all(config.backends, processed)
            decision = vote(predictions, expected_size=config.ensemble_size)
        except BackendError as exc:
            return _http_error(
                502, {"message": str(exc), "model_id": exc.model_id}
            )
        except ConfigurationError as exc:
            return _http_error(503, str(exc))
        now = _utc_now_iso()
        record = CaseRecord(
            case_id=str(uuid.uuid4()),
            image_ref="",
            decision=decision.to_dict(),
            average_distribution=average_distribution(decision.member_predictions),
            status=STATUS_FLAGGED if decision.needs_review else STATUS_CLASSIFIED,
            created_at=now,
            updated_at=now,
        )
        store.save_new(record, body, ext)
        return record.to_dict()

    @app.get("/v1/cases")
    def list_cases(status: str | None = None):
        return {"cases": store.list(status=status)}

    @app.get("/v1/cases/{case_id}")
    def get_case(case_id: str):
        try:
            record = store.get(case_id)
        except KeyError:
            return _http_error(404, f"no case {case_id}")
        return record.to_dict()

    @app.post("/v1/cases/{case_id}/report")
    def make_report(case_id: str, force: bool = False):
        with store.lock(case_id):
            try:
                record = store.get(case_id)
            except KeyError:
                return _http_error(404, f"no case {case_id}")
            if record.report is not None and not force:
                return {"case": record.to_dict(), "generated": False}

            decision = EnsembleDecision.from_dict(record.decision)
            request_obj = reporting.ReportRequest.from_decision(decision)

            def run():
                report = reporting.generate_report(
                    request_obj, config.llm, transport=config.llm_transport
                )
                record.report = report.to_dict()
                if not decision.needs_review:
                    record.status = STATUS_REPORTED
                store.save(record)
                return {"case": record.to_dict(), "generated": True}

            return _llm_call(run)

    @app.post("/v1/cases/{case_id}/chat")
    def chat(case_id: str, body: ChatBody):
        with store.lock(case_id):
            try:
                record = store.get(case_id)
            except KeyError:
                return _http_error(404, f"no case {case_id}")
            try:
                verdict = reporting.validate_query(body.query)
            except InputError as exc:
                return _http_error(422, str(exc))
            if not verdict.accepted:
                return _http_error(
                    422,
                    {
                        "rejected": True,
                        "category": verdict.category,
                        "reason": verdict.reason,
                    },
                )

            decision = EnsembleDecision.from_dict(record.decision)

            def run():
                reply = reporting.chat_respond(
                    decision,
                    record.chat_history,
                    body.query,
                    config.llm,
                    transport=config.llm_transport,
                    window=config.chat_window,
                )
                record.chat_history.append({"role": "user", "content": body.query})
                record.chat_history.append({"role": "assistant", "content": reply})
                store.save(record)
                return {"reply": reply, "case": record.to_dict()}

            return _llm_call(run)

    @app.post("/v1/evaluate")
    async def evaluate(request: Request):
        body = await request.body()
        text = body.decode("utf-8", errors="replace")
        try:
            samples = parse_prediction_lines(text.splitlines())
            report = summarize(samples)
            rates = rates_table(samples)
        except ParseError as exc:
            return _http_error(400, {"message": str(exc), "line": exc.line})
        except DermTriageError as exc:
            return _http_error(400, {"message": str(exc), "line": None})
        return {"summary": report.to_dict(), "rates": rates}

    return app
