"""HTTP session service for interactive use.

JSON over HTTP: images and masks travel as base64 PNG. Sessions are
isolated, carry an undo history, and evict LRU past the configured
limit. The model is shared read-only; each session serializes its own
requests with a lock.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from .checkpoint import checkpoint_hash, load_checkpoint
from .clicks import Click, ClickState
from .model import Segmenter
from .simulate import iou

SESSION_TTL_SECONDS = 30 * 60


class CreateSession(BaseModel):
    image: str           # base64 PNG, RGB or RGBA
    gt: str | None = None


class ClickRequest(BaseModel):
    x: int
    y: int
    positive: bool = True


@dataclass
class Letterbox:
    """Aspect-preserving placement of a W0 x H0 image inside a square."""

    w0: int
    h0: int
    side: int

    @property
    def scale(self) -> float:
        return self.side / max(self.w0, self.h0)

    @property
    def content(self) -> tuple[int, int]:
        return (max(1, round(self.w0 * self.scale)), max(1, round(self.h0 * self.scale)))

    @property
    def offset(self) -> tuple[int, int]:
        cw, ch = self.content
        return ((self.side - cw) // 2, (self.side - ch) // 2)

    def to_model(self, x: float, y: float) -> tuple[int, int]:
        cw, ch = self.content
        ox, oy = self.offset
        mx = ox + min(cw - 1, max(0, int(x * self.scale)))
        my = oy + min(ch - 1, max(0, int(y * self.scale)))
        return mx, my


@dataclass
class Session:
    sid: str
    letterbox: Letterbox
    model_image: np.ndarray                 # [3, side, side]
    gt: np.ndarray | None                   # [H0, W0] bool
    clicks: list[dict] = field(default_factory=list)
    history: list[np.ndarray] = field(default_factory=list)  # model-res prob masks
    created: float = field(default_factory=time.time)
    last_used: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _decode_png(b64: str) -> Image.Image:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
        return img
    except Exception as exc:  # malformed base64 or not an image
        raise HTTPException(status_code=400, detail=f"invalid PNG payload: {exc}") from exc


def _encode_png_gray(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _letterbox_image(img: Image.Image, side: int) -> tuple[np.ndarray, Letterbox]:
    if img.mode not in ("RGB", "RGBA"):
        img = img.convert("RGB")
    if img.mode == "RGBA":
        img = img.convert("RGB")
    w0, h0 = img.size
    lb = Letterbox(w0, h0, side)
    cw, ch = lb.content
    resized = img.resize((cw, ch), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    mean = arr.mean(axis=(0, 1))
    canvas = np.tile(mean.reshape(1, 1, 3), (side, side, 1)).astype(np.float32)
    ox, oy = lb.offset
    canvas[oy:oy + ch, ox:ox + cw] = arr
    return canvas.transpose(2, 0, 1).copy(), lb


def _unletterbox_probs(probs: np.ndarray, lb: Letterbox) -> np.ndarray:
    """Model-resolution probabilities -> original-resolution probabilities."""
    cw, ch = lb.content
    ox, oy = lb.offset
    crop = probs[oy:oy + ch, ox:ox + cw]
    img = Image.fromarray(crop.astype(np.float32), mode="F")
    return np.asarray(img.resize((lb.w0, lb.h0), Image.BILINEAR), dtype=np.float32)


class SessionStore:
    def __init__(self, max_sessions: int, ttl: float = SESSION_TTL_SECONDS):
        self.max_sessions = max_sessions
        self.ttl = ttl
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, Session] = OrderedDict()

    def put(self, session: Session):
        with self._lock:
            self._expire()
            self._sessions[session.sid] = session
            self._sessions.move_to_end(session.sid)
            while len(self._sessions) > self.max_sessions:
                self._sessions.popitem(last=False)

    def get(self, sid: str) -> Session:
        with self._lock:
            self._expire()
            session = self._sessions.get(sid)
            if session is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            session.last_used = time.time()
            self._sessions.move_to_end(sid)
            return session

    def _expire(self):
        now = time.time()
        dead = [sid for sid, s in self._sessions.items() if now - s.last_used > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def __len__(self):
        with self._lock:
            return len(self._sessions)


def create_app(checkpoint_path=None, model: Segmenter | None = None,
               max_sessions: int = 64, cors_origin: str = "*") -> FastAPI:
    """Build the service; pass either a checkpoint path or a live model."""
    app = FastAPI(title="clickseg", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin] if cors_origin != "*" else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    state = {"model": model, "hash": None}
    if checkpoint_path is not None:
        state["model"] = load_checkpoint(checkpoint_path)
        state["hash"] = checkpoint_hash(checkpoint_path)
    store = SessionStore(max_sessions)
    app.state.sessions = store

    def model_or_503() -> Segmenter:
        if state["model"] is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return state["model"]

    @app.get("/healthz")
    def healthz():
        if state["model"] is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return {"status": "ok", "checkpoint_hash": state["hash"]}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        mdl = model_or_503()
        img = _decode_png(body.image)
        w0, h0 = img.size
        model_image, lb = _letterbox_image(img, mdl.cfg.side)
        gt = None
        if body.gt is not None:
            gt_img = _decode_png(body.gt)
            if gt_img.size != (w0, h0):
                raise HTTPException(status_code=400,
                                    detail=f"gt size {gt_img.size} does not match image {(w0, h0)}")
            gt = np.asarray(gt_img.convert("L"), dtype=np.uint8) > 127
        session = Session(
            sid=uuid.uuid4().hex,
            letterbox=lb,
            model_image=model_image,
            gt=gt,
            history=[np.zeros((mdl.cfg.side, mdl.cfg.side), dtype=np.float32)],
        )
        store.put(session)
        return {"session_id": session.sid, "width": w0, "height": h0}

    def _mask_response(session: Session, probs: np.ndarray, soft: bool) -> dict:
        full = _unletterbox_probs(probs, session.letterbox)
        binary = (full > 0.5).astype(np.uint8) * 255
        out = {
            "mask": _encode_png_gray(binary),
            "click_count": len(session.clicks),
        }
        if soft:
            out["soft_mask"] = _encode_png_gray(np.round(full * 255))
        if session.gt is not None:
            out["iou"] = iou(full > 0.5, session.gt)
        return out

    @app.post("/sessions/{sid}/clicks")
    def post_click(sid: str, body: ClickRequest, soft: int = Query(default=0)):
        mdl = model_or_503()
        session = store.get(sid)
        lb = session.letterbox
        if not (0 <= body.x < lb.w0 and 0 <= body.y < lb.h0):
            raise HTTPException(status_code=422,
                                detail=f"click ({body.x}, {body.y}) outside image {lb.w0}x{lb.h0}")
        with session.lock:
            session.clicks.append({"x": body.x, "y": body.y, "positive": body.positive})
            clicks = [Click(*lb.to_model(c["x"], c["y"]), c["positive"]) for c in session.clicks]
            state_obj = ClickState(clicks, session.history[-1].copy())
            probs = mdl.predict_probs(session.model_image, state_obj)
            session.history.append(probs)
            return _mask_response(session, probs, bool(soft))

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str, soft: int = Query(default=0)):
        session = store.get(sid)
        with session.lock:
            if len(session.history) <= 1:
                raise HTTPException(status_code=409, detail="nothing to undo")
            session.history.pop()
            session.clicks.pop()
            return _mask_response(session, session.history[-1], bool(soft))

    @app.post("/sessions/{sid}/reset")
    def reset(sid: str):
        mdl = model_or_503()
        session = store.get(sid)
        with session.lock:
            session.clicks.clear()
            session.history = [np.zeros((mdl.cfg.side, mdl.cfg.side), dtype=np.float32)]
            return {"session_id": sid, "click_count": 0}

    @app.get("/sessions/{sid}")
    def session_state(sid: str):
        session = store.get(sid)
        return {
            "session_id": sid,
            "width": session.letterbox.w0,
            "height": session.letterbox.h0,
            "click_count": len(session.clicks),
            "clicks": list(session.clicks),
            "history_depth": len(session.history),
            "has_gt": session.gt is not None,
        }

    return app


def serve(checkpoint_path, port: int = 8080, host: str = "127.0.0.1",
          max_sessions: int = 64):
    import uvicorn

    app = create_app(checkpoint_path=checkpoint_path, max_sessions=max_sessions)
    uvicorn.run(app, host=host, port=port, log_level="info")
