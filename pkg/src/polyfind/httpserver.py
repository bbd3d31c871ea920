"""HTTP JSON API over AppState.

Multi-threaded request handling; every handler reads one immutable
snapshot, so responses are internally consistent without read locks.
Bodies are UTF-8 JSON except POST /services, which takes the raw XML
descriptor document.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import ServerConfig
from .descriptor import descriptor_to_dict
from .discovery import Query, response_to_dict
from .errors import PolyfindError, PortionNotFound, SchemaViolation
from .importer import report_to_dict
from .ontology import load_portion, portion_to_dict
from .registry import get as registry_get
from .state import AppState

log = logging.getLogger(__name__)

_MAX_BODY = 16 * 1024 * 1024


def _json_body(handler: "ApiHandler") -> object:
    length = handler.headers.get("Content-Length")
    if length is None or not length.isdigit():
        raise SchemaViolation("$", "request requires a Content-Length body")
    size = int(length)
    if size > _MAX_BODY:
        raise SchemaViolation("$", "request body too large")
    raw = handler.rfile.read(size)
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation("$", f"body is not valid JSON: {exc}") from exc


def _fields(doc: object, required: dict[str, type], optional: dict[str, type]) -> dict:
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "body must be a JSON object")
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise SchemaViolation(f"$.{sorted(unknown)[0]}", "unknown field")
    out = {}
    for name, kind in required.items():
        if name not in doc:
            raise SchemaViolation(f"$.{name}", "missing field")
        if not isinstance(doc[name], kind):
            raise SchemaViolation(f"$.{name}", f"expected {kind.__name__}")
        out[name] = doc[name]
    for name, kind in optional.items():
        if name in doc and doc[name] is not None:
            if not isinstance(doc[name], kind):
                raise SchemaViolation(f"$.{name}", f"expected {kind.__name__}")
            out[name] = doc[name]
    return out


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "polyfind/0.1"
    protocol_version = "HTTP/1.1"

    # (method, compiled path pattern, handler name)
    ROUTES = [
        ("GET", re.compile(r"/health\Z"), "handle_health"),
        ("POST", re.compile(r"/services\Z"), "handle_publish"),
        ("GET", re.compile(r"/services/([^/]+)\Z"), "handle_get_service"),
        ("DELETE", re.compile(r"/services/([^/]+)\Z"), "handle_delete_service"),
        ("POST", re.compile(r"/discover\Z"), "handle_discover"),
        ("POST", re.compile(r"/bind\Z"), "handle_bind"),
        ("GET", re.compile(r"/portions\Z"), "handle_list_portions"),
        ("GET", re.compile(r"/portions/([^/]+)/([^/]+)\Z"), "handle_get_portion"),
        ("PUT", re.compile(r"/portions/([^/]+)/([^/]+)\Z"), "handle_put_portion"),
        ("POST", re.compile(r"/ontology/import\Z"), "handle_import"),
    ]

    @property
    def app(self) -> AppState:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        log.debug("%s %s", self.address_string(), format % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        if status >= 400:
            # The request body may be unread; do not reuse this connection.
            self.send_header("Connection", "close")
            self.close_connection = True
        self.end_headers()
        self.wfile.write(body)

    def _dispatch(self, method: str) -> None:
        path = self.path.split("?", 1)[0]
        try:
            for route_method, pattern, name in self.ROUTES:
                match = pattern.match(path)
                if match and route_method == method:
                    getattr(self, name)(*match.groups())
                    return
            self._send_json(404, {"error": "NotFound", "detail": f"no route {method} {path}"})
        except PolyfindError as exc:
            self._send_json(exc.http_status, {"error": type(exc).__name__, "detail": str(exc)})
        except Exception:  # pragma: no cover - defensive
            log.exception("unhandled error on %s %s", method, path)
            self._send_json(500, {"error": "InternalError", "detail": "unhandled server error"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")

    # --- handlers ---

    def handle_health(self):
        self._send_json(200, self.app.health())

    def handle_publish(self):
        length = self.headers.get("Content-Length")
        if length is None or not length.isdigit():
            raise SchemaViolation("$", "request requires a Content-Length body")
        size = int(length)
        if size > _MAX_BODY:
            raise SchemaViolation("$", "request body too large")
        document = self.rfile.read(size)
        service_id = self.app.publish_descriptor(document)
        self._send_json(201, {"service_id": service_id})

    def handle_get_service(self, service_id: str):
        descriptor = registry_get(self.app.snapshot().registry, service_id)
        self._send_json(200, descriptor_to_dict(descriptor))

    def handle_delete_service(self, service_id: str):
        self.app.remove_service(service_id)
        self._send_json(200, {"service_id": service_id, "deleted": True})

    def handle_discover(self):
        body = _fields(
            _json_body(self),
            required={"text": str, "domain": str, "requester_id": str},
            optional={"language": str},
        )
        query = Query(
            text=body["text"],
            domain=body["domain"],
            requester_id=body["requester_id"],
            declared_language=body.get("language"),
        )
        self._send_json(200, response_to_dict(self.app.discover(query)))

    def handle_bind(self):
        body = _fields(
            _json_body(self),
            required={"service_id": str, "requester_id": str},
            optional={},
        )
        ticket = self.app.bind_service(body["service_id"], body["requester_id"])
        self._send_json(
            200,
            {
                "ticket_id": ticket.ticket_id,
                "service_id": ticket.service_id,
                "requester_id": ticket.requester_id,
                "endpoint": ticket.endpoint,
                "issued_at": ticket.issued_at,
            },
        )

    def handle_list_portions(self):
        portions = self.app.snapshot().ontology.portions
        listing = [
            {"domain": p.domain, "language": p.language, "version": p.version}
            for p in (portions[key] for key in sorted(portions))
        ]
        self._send_json(200, {"portions": listing})

    def handle_get_portion(self, domain: str, language: str):
        portion = self.app.snapshot().ontology.portions.get((domain, language))
        if portion is None:
            raise PortionNotFound(f"no portion {domain}.{language}")
        self._send_json(200, portion_to_dict(portion))

    def handle_put_portion(self, domain: str, language: str):
        length = self.headers.get("Content-Length")
        if length is None or not length.isdigit():
            raise SchemaViolation("$", "request requires a Content-Length body")
        document = self.rfile.read(int(length))
        portion = load_portion(document)
        if portion.domain != domain or portion.language != language:
            raise SchemaViolation(
                "$", f"body holds {portion.domain}.{portion.language}, path says {domain}.{language}"
            )
        self.app.put_portion(portion)
        self._send_json(
            200, {"domain": portion.domain, "language": portion.language, "version": portion.version}
        )

    def handle_import(self):
        body = _fields(
            _json_body(self),
            required={"repo": str, "domain": str, "language": str},
            optional={},
        )
        report = self.app.import_portion(
            body["repo"], body["domain"], body["language"], wait=False
        )
        self._send_json(200, report_to_dict(report))


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    # The socketserver default backlog of 5 drops connections under
    # concurrent load; size it for bursts of parallel clients.
    request_queue_size = 128

    def __init__(self, address: tuple[str, int], app: AppState):
        super().__init__(address, ApiHandler)
        self.app = app


def make_server(config: ServerConfig) -> ApiServer:
    """Build state and bind the listening socket; port 0 picks a free port."""
    app = AppState(config)
    server = ApiServer((config.host, config.port), app)
    return server


def run_in_thread(server: ApiServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
