"""Local HTTP API for interactive threshold tuning.

A session holds one neuron's two channels, its traces and a base
configuration in memory. The preview and marks endpoints are pure
functions of (session inputs, tr, tg), and the analyze endpoint returns
exactly what the headless pipeline computes for the same inputs, so the
browser console adds no numerical behavior of its own.

Routes:
    GET  /health                           -> "ok"
    POST /session                          -> session summary (multipart:
                                              red, green, traces, config)
    GET  /session/{id}/preview?tr=&tg=     -> PNG, candidates in red
    GET  /session/{id}/marks?tr=&tg=       -> PNG, counted synapses crossed
    POST /session/{id}/analyze             -> report JSON (+ centroids)
Static assets are served from an optional directory for the browser UI.
"""

import io
import json
import logging
import mimetypes
import re
import threading
import time
import uuid
from dataclasses import dataclass, replace
from email.parser import BytesParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .errors import InputError
from .detect import (
    AnalysisConfig,
    colocalization_mask,
    connected_components,
    filter_components,
    run_analysis,
)
from .images import GrayImage, encode_png, load_tiff, normalize_to_8bit
from .report import (
    render_candidates_overlay,
    render_region_overlay,
    render_marked_synapses,
    report_to_dict,
)
from .traces import (
    Mask,
    TraceSet,
    parse_ndf,
    parse_traces_json,
    px_to_microns,
    rasterize_tube,
    trace_length_px,
    union_masks,
)

__all__ = ["Session", "SessionStore", "create_server", "DEFAULT_PORT"]

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8711
DEFAULT_SESSION_TTL = 30 * 60  # seconds of idle time before a session expires
DEFAULT_MAX_UPLOAD = 64 * 1024 * 1024

_SESSION_ROUTE = re.compile(r"^/session/([0-9a-f]{32})/(preview|marks|analyze)$")
_LOCALHOST_ORIGIN = re.compile(r"^https?://(localhost|127\.0\.0\.1)(:\d+)?$")


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


@dataclass(frozen=True)
class Session:
    """One uploaded neuron with its precomputed region geometry."""

    id: str
    red: GrayImage
    green: GrayImage
    traces: TraceSet
    base_config: AnalysisConfig
    tubes: tuple[tuple[int, Mask], ...]
    region: Mask
    created_at: float

    def candidates(self, t_r: int, t_g: int) -> Mask:
        return colocalization_mask(
            normalize_to_8bit(self.red), normalize_to_8bit(self.green),
            self.region, t_r, t_g,
        )


class SessionStore:
    """Thread-safe in-memory session map with idle expiry."""

    def __init__(self, ttl: float = DEFAULT_SESSION_TTL):
        self._ttl = ttl
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._last_used: dict[str, float] = {}

    def put(self, session: Session) -> None:
        with self._lock:
            self._purge()
            self._sessions[session.id] = session
            self._last_used[session.id] = time.monotonic()

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._purge()
            session = self._sessions.get(session_id)
            if session is None:
                raise KeyError(session_id)
            self._last_used[session_id] = time.monotonic()
            return session

    def _purge(self) -> None:
        now = time.monotonic()
        for sid, used in list(self._last_used.items()):
            if now - used > self._ttl:
                del self._sessions[sid]
                del self._last_used[sid]

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _parse_multipart(content_type: str, body: bytes) -> dict[str, bytes]:
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n"
    msg = BytesParser().parsebytes(header.encode("latin-1") + body)
    if not msg.is_multipart():
        raise HttpError(400, "expected a multipart/form-data body")
    parts: dict[str, bytes] = {}
    for part in msg.get_payload():
        name = part.get_param("name", header="content-disposition")
        if name:
            parts[str(name)] = part.get_payload(decode=True) or b""
    return parts


def _parse_session_config(raw: bytes) -> AnalysisConfig:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise HttpError(400, f"config: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise HttpError(400, "config: must be an object")
    for required in ("scale", "thickness"):
        if required not in obj:
            raise HttpError(400, f"config.{required}: missing field")
    defaults = {"threshold_red": 128, "threshold_green": 128}
    allowed = {
        "scale", "thickness", "threshold_red", "threshold_green",
        "min_area", "connectivity", "mode",
    }
    unknown = set(obj) - allowed
    if unknown:
        raise HttpError(400, f"config: unknown field(s): {', '.join(sorted(unknown))}")
    try:
        return AnalysisConfig(**{**defaults, **obj})
    except (TypeError, ValueError) as exc:
        raise HttpError(400, f"config: {exc}") from exc


def _load_channel(parts: dict[str, bytes], name: str, channel: str) -> GrayImage:
    if name not in parts:
        raise HttpError(400, f"{name}: missing multipart file")
    try:
        return load_tiff(io.BytesIO(parts[name]), channel=channel)
    except InputError as exc:
        raise HttpError(400, f"{name}: {exc}") from exc


def _build_session(parts: dict[str, bytes]) -> Session:
    red = _load_channel(parts, "red", "red")
    green = _load_channel(parts, "green", "green")
    if "traces" not in parts:
        raise HttpError(400, "traces: missing multipart file")
    raw_traces = parts["traces"]
    try:
        if raw_traces.lstrip()[:2] == b"//":
            traces = parse_ndf(raw_traces)
        else:
            traces = parse_traces_json(raw_traces)
    except InputError as exc:
        raise HttpError(400, f"traces: {exc}") from exc
    if "config" not in parts:
        raise HttpError(400, "config: missing multipart field")
    config = _parse_session_config(parts["config"])
    if (red.width, red.height) != (green.width, green.height):
        raise HttpError(
            400,
            f"red/green dimensions differ: {red.width}x{red.height} vs "
            f"{green.width}x{green.height}",
        )
    tubes = tuple(
        (t.id, rasterize_tube(t, config.thickness_px, red.width, red.height))
        for t in traces.traces
    )
    region = union_masks([m for _, m in tubes])
    return Session(
        id=uuid.uuid4().hex,
        red=red,
        green=green,
        traces=traces,
        base_config=config,
        tubes=tubes,
        region=region,
        created_at=time.time(),
    )


def _session_summary(session: Session) -> dict:
    return {
        "id": session.id,
        "width": session.red.width,
        "height": session.red.height,
        "dendrites": [
            {
                "id": t.id,
                "name": t.name,
                "length_um": px_to_microns(
                    trace_length_px(t), session.base_config.scale
                ),
            }
            for t in session.traces.traces
        ],
    }


def _thresholds_from_query(query: str) -> tuple[int, int]:
    params = parse_qs(query)
    values = []
    for key in ("tr", "tg"):
        raw = params.get(key)
        if not raw:
            raise HttpError(400, f"{key}: missing query parameter")
        try:
            value = int(raw[0])
        except ValueError as exc:
            raise HttpError(400, f"{key}: not an integer") from exc
        if not 0 <= value <= 255:
            raise HttpError(400, f"{key}: out of range 0-255")
        values.append(value)
    return values[0], values[1]


class _Handler(BaseHTTPRequestHandler):
    server_version = "synapcount"
    protocol_version = "HTTP/1.1"

    # --- plumbing -----------------------------------------------------

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _cors_headers(self):
        origin = self.headers.get("Origin", "")
        if _LOCALHOST_ORIGIN.match(origin):
            self.send_header("Access-Control-Allow-Origin", origin)
            self.send_header("Vary", "Origin")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_bytes(self, status: int, payload: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self._cors_headers()
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, obj):
        self._send_bytes(
            status, json.dumps(obj).encode("utf-8"), "application/json; charset=utf-8"
        )

    def _send_error_json(self, status: int, message: str):
        self._send_json(status, {"error": message})

    def _read_body(self) -> bytes:
        length = self.headers.get("Content-Length")
        if length is None:
            raise HttpError(400, "Content-Length required")
        try:
            n = int(length)
        except ValueError as exc:
            raise HttpError(400, "bad Content-Length") from exc
        if n > self.server.max_upload:  # type: ignore[attr-defined]
            raise HttpError(413, f"upload exceeds {self.server.max_upload} bytes")
        return self.rfile.read(n)

    def _session(self, session_id: str) -> Session:
        try:
            return self.server.store.get(session_id)  # type: ignore[attr-defined]
        except KeyError as exc:
            raise HttpError(404, f"unknown session {session_id}") from exc

    # --- request handlers ---------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors_headers()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        try:
            url = urlsplit(self.path)
            if url.path == "/health":
                self._send_bytes(200, b"ok", "text/plain; charset=utf-8")
                return
            m = _SESSION_ROUTE.match(url.path)
            if m and m.group(2) in ("preview", "marks"):
                session = self._session(m.group(1))
                t_r, t_g = _thresholds_from_query(url.query)
                if m.group(2) == "preview":
                    png = self._render_preview(session, t_r, t_g)
                else:
                    png = self._render_marks(session, t_r, t_g)
                self._send_bytes(200, png, "image/png")
                return
            if self._serve_static(url.path):
                return
            self._send_error_json(404, f"no such route: {url.path}")
        except HttpError as exc:
            self._send_error_json(exc.status, exc.message)
        except Exception as exc:
            logger.exception("GET %s failed", self.path)
            self._send_error_json(500, str(exc))

    def do_POST(self):
        try:
            url = urlsplit(self.path)
            if url.path == "/session":
                body = self._read_body()
                content_type = self.headers.get("Content-Type", "")
                if "multipart/form-data" not in content_type:
                    raise HttpError(400, "expected multipart/form-data")
                parts = _parse_multipart(content_type, body)
                session = _build_session(parts)
                self.server.store.put(session)  # type: ignore[attr-defined]
                self._send_json(200, _session_summary(session))
                return
            m = _SESSION_ROUTE.match(url.path)
            if m and m.group(2) == "analyze":
                session = self._session(m.group(1))
                body = self._read_body()
                self._send_json(200, self._analyze(session, body))
                return
            self._send_error_json(404, f"no such route: {url.path}")
        except HttpError as exc:
            self._send_error_json(exc.status, exc.message)
        except Exception as exc:
            logger.exception("POST %s failed", self.path)
            self._send_error_json(500, str(exc))

    # --- endpoint logic -------------------------------------------------

    def _render_preview(self, session: Session, t_r: int, t_g: int) -> bytes:
        candidates = session.candidates(t_r, t_g)
        overlay = render_candidates_overlay(
            session.red, session.green, session.region, candidates
        )
        return encode_png(overlay)

    def _render_marks(self, session: Session, t_r: int, t_g: int) -> bytes:
        candidates = session.candidates(t_r, t_g)
        components = filter_components(
            connected_components(candidates, session.base_config.connectivity),
            session.base_config.min_area,
        )
        base = render_region_overlay(session.red, session.green, session.region)
        marked = render_marked_synapses(
            base, [c.centroid for c in components.components]
        )
        return encode_png(marked)

    def _analyze(self, session: Session, body: bytes) -> dict:
        try:
            obj = json.loads(body) if body.strip() else {}
        except json.JSONDecodeError as exc:
            raise HttpError(400, f"invalid JSON body: {exc}") from exc
        if not isinstance(obj, dict):
            raise HttpError(400, "body must be a JSON object")
        allowed = {"threshold_red", "threshold_green", "mode", "min_area"}
        unknown = set(obj) - allowed
        if unknown:
            raise HttpError(400, f"unknown field(s): {', '.join(sorted(unknown))}")
        try:
            config = replace(session.base_config, **obj)
        except (TypeError, ValueError) as exc:
            raise HttpError(400, str(exc)) from exc
        detail = run_analysis(session.red, session.green, session.traces, config)
        result = report_to_dict(detail.report)
        result["centroids"] = [list(c.centroid) for c in detail.components.components]
        return result

    def _serve_static(self, path: str) -> bool:
        root = self.server.static_dir  # type: ignore[attr-defined]
        if root is None:
            return False
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        try:
            target.relative_to(root)
        except ValueError:
            raise HttpError(404, "not found") from None
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return False
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send_bytes(200, target.read_bytes(), content_type)
        return True


class SynapCountServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address,
        *,
        static_dir: str | Path | None,
        session_ttl: float,
        max_upload: int,
    ):
        super().__init__(address, _Handler)
        self.store = SessionStore(ttl=session_ttl)
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.max_upload = max_upload


def create_server(
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    *,
    static_dir: str | Path | None = None,
    session_ttl: float = DEFAULT_SESSION_TTL,
    max_upload: int = DEFAULT_MAX_UPLOAD,
) -> SynapCountServer:
    """Bind the API server; raises OSError if the port is taken."""
    return SynapCountServer(
        (host, port),
        static_dir=static_dir,
        session_ttl=session_ttl,
        max_upload=max_upload,
    )
