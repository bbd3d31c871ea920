import http.client
import json
import threading

import pytest

from polyfind.config import ServerConfig
from polyfind.httpserver import ApiServer, make_server, run_in_thread
from polyfind.importer import RemoteRepoRef
from polyfind.ontology import (
    Relation,
    Term,
    TermId,
    add_terms,
    create_portion,
    save_portion,
)

from conftest import ALIGNMENT_FILE, DESCRIPTOR_FILES, PORTION_FILES

AR_TEXT = "الجذر التربيعي"


def request(address, method, path, body=None, content_length=None):
    """One HTTP exchange; returns (status, decoded JSON or None)."""
    host, port = address
    conn = http.client.HTTPConnection(host, port, timeout=10)
    try:
        if isinstance(body, (dict, list)):
            body = json.dumps(body).encode("utf-8")
        if content_length is not None:
            conn.putrequest(method, path)
            conn.putheader("Content-Length", str(content_length))
            conn.endheaders()
        else:
            conn.request(method, path, body=body)
        response = conn.getresponse()
        raw = response.read()
        doc = json.loads(raw.decode("utf-8")) if raw else None
        return response.status, doc
    finally:
        conn.close()


@pytest.fixture(scope="module")
def api(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("api") / "data"
    (data_dir / "portions").mkdir(parents=True)
    (data_dir / "alignments").mkdir()
    for path in PORTION_FILES:
        (data_dir / "portions" / path.name).write_bytes(path.read_bytes())
    (data_dir / "alignments" / ALIGNMENT_FILE.name).write_bytes(
        ALIGNMENT_FILE.read_bytes()
    )
    server = make_server(ServerConfig(host="127.0.0.1", port=0, data_dir=data_dir))
    thread = run_in_thread(server)
    address = server.server_address[:2]
    for path in DESCRIPTOR_FILES:
        status, doc = request(address, "POST", "/services", path.read_bytes())
        assert status == 201
    yield address
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


class TestBasicRoutes:
    def test_health(self, api):
        status, doc = request(api, "GET", "/health")
        assert status == 200
        assert doc["status"] == "ok"
        assert doc["portions"] >= 3
        assert doc["services"] >= 3

    def test_health_ignores_query_string(self, api):
        status, _ = request(api, "GET", "/health?verbose=1")
        assert status == 200

    def test_unknown_route(self, api):
        status, doc = request(api, "GET", "/nope")
        assert status == 404
        assert doc == {"error": "NotFound", "detail": "no route GET /nope"}

    def test_wrong_method_is_not_found(self, api):
        status, doc = request(api, "DELETE", "/health")
        assert status == 404
        assert doc["error"] == "NotFound"


class TestServices:
    def test_get_seeded_service(self, api):
        status, doc = request(api, "GET", "/services/s-000002")
        assert status == 200
        assert doc["service_id"] == "s-000002"
        assert doc["name"] == "SquareRootService"
        assert doc["language"] == "en"
        assert doc["endpoint"] == "https://math.example.com/sqrt"
        assert doc["operations"]

    def test_non_ascii_payload_survives(self, api):
        status, doc = request(api, "GET", "/services/s-000001")
        assert status == 200
        assert doc["language"] == "ar"
        assert "الجذر" in doc["name"]

    def test_publish_get_delete_cycle(self, api):
        status, doc = request(
            api, "POST", "/services", DESCRIPTOR_FILES[1].read_bytes()
        )
        assert status == 201
        sid = doc["service_id"]
        assert sid not in {"s-000001", "s-000002", "s-000003"}

        status, _ = request(api, "GET", f"/services/{sid}")
        assert status == 200
        status, doc = request(api, "DELETE", f"/services/{sid}")
        assert (status, doc) == (200, {"service_id": sid, "deleted": True})
        status, doc = request(api, "GET", f"/services/{sid}")
        assert status == 404
        assert doc["error"] == "UnknownService"

    def test_unknown_service(self, api):
        status, doc = request(api, "GET", "/services/s-424242")
        assert status == 404
        assert doc["error"] == "UnknownService"

    def test_publish_malformed_xml(self, api):
        status, doc = request(api, "POST", "/services", b"<service")
        assert status == 400
        assert doc["error"] == "MalformedXml"
        assert "line" in doc["detail"]

    def test_publish_without_body(self, api):
        conn = http.client.HTTPConnection(*api, timeout=10)
        try:
            conn.putrequest("POST", "/services")
            conn.endheaders()
            response = conn.getresponse()
            doc = json.loads(response.read().decode("utf-8"))
        finally:
            conn.close()
        assert response.status == 400
        assert doc["error"] == "SchemaViolation"

    def test_oversized_body_rejected_without_reading(self, api):
        status, doc = request(
            api, "POST", "/services", content_length=17 * 1024 * 1024
        )
        assert status == 400
        assert doc["error"] == "SchemaViolation"
        assert "too large" in doc["detail"]


class TestDiscoverAndBind:
    def test_discover_arabic_query(self, api):
        status, doc = request(api, "POST", "/discover", {
            "text": AR_TEXT, "domain": "math", "requester_id": "alice",
        })
        assert status == 200
        assert doc["detected"] == {
            "language": "ar", "confidence": 1.0, "method": "script",
        }
        assert {r["service_id"] for r in doc["results"]} == {
            "s-000001", "s-000002", "s-000003",
        }

    def test_discover_declared_language(self, api):
        status, doc = request(api, "POST", "/discover", {
            "text": "square root", "domain": "math",
            "requester_id": "alice", "language": "en",
        })
        assert status == 200
        assert doc["detected"]["method"] == "declared"

    @pytest.mark.parametrize("body, fragment", [
        ({"domain": "math", "requester_id": "a"}, "$.text"),
        ({"text": "x", "domain": "math", "requester_id": "a", "x": 1}, "$.x"),
        ({"text": 1, "domain": "math", "requester_id": "a"}, "$.text"),
    ])
    def test_discover_schema_errors(self, api, body, fragment):
        status, doc = request(api, "POST", "/discover", body)
        assert status == 400
        assert doc["error"] == "SchemaViolation"
        assert fragment in doc["detail"]

    def test_discover_body_not_json(self, api):
        status, doc = request(api, "POST", "/discover", b"not json")
        assert status == 400
        assert doc["error"] == "SchemaViolation"

    def test_discover_empty_query(self, api):
        status, doc = request(api, "POST", "/discover", {
            "text": "...", "domain": "math", "requester_id": "a", "language": "en",
        })
        assert status == 400
        assert doc["error"] == "EmptyQuery"

    def test_bind_round_trip(self, api):
        status, doc = request(api, "POST", "/bind", {
            "service_id": "s-000002", "requester_id": "alice",
        })
        assert status == 200
        assert doc["service_id"] == "s-000002"
        assert doc["requester_id"] == "alice"
        assert doc["endpoint"] == "https://math.example.com/sqrt"
        assert doc["ticket_id"].startswith("t-")
        assert doc["issued_at"].endswith("+00:00")

    def test_bind_unknown_service(self, api):
        status, doc = request(api, "POST", "/bind", {
            "service_id": "s-424242", "requester_id": "alice",
        })
        assert status == 404
        assert doc["error"] == "UnknownService"

    def test_bind_missing_field(self, api):
        status, doc = request(api, "POST", "/bind", {"service_id": "s-000002"})
        assert status == 400
        assert doc["error"] == "SchemaViolation"


def german_portion(domain="chem"):
    portion = create_portion(domain, "de")
    return add_terms(portion, [
        Term(TermId(domain, "wurzel"), "wurzel"),
        Term(
            TermId(domain, "quadratwurzel"),
            "quadratwurzel",
            relations=(Relation("broader", TermId(domain, "wurzel")),),
        ),
    ])


class TestPortions:
    def test_listing(self, api):
        status, doc = request(api, "GET", "/portions")
        assert status == 200
        math_entries = [p for p in doc["portions"] if p["domain"] == "math"]
        assert math_entries == [
            {"domain": "math", "language": "ar", "version": 2},
            {"domain": "math", "language": "en", "version": 2},
            {"domain": "math", "language": "fr", "version": 2},
        ]

    def test_get_portion(self, api):
        status, doc = request(api, "GET", "/portions/math/en")
        assert status == 200
        assert (doc["domain"], doc["language"], doc["version"]) == ("math", "en", 2)
        assert any(t["id"] == "math#square_root" for t in doc["terms"])

    def test_get_missing_portion(self, api):
        status, doc = request(api, "GET", "/portions/math/de")
        assert status == 404
        assert doc["error"] == "PortionNotFound"

    def test_put_new_portion(self, api):
        body = save_portion(german_portion())
        status, doc = request(api, "PUT", "/portions/chem/de", body)
        assert status == 200
        assert doc == {"domain": "chem", "language": "de", "version": 2}
        status, doc = request(api, "GET", "/portions/chem/de")
        assert status == 200

    def test_put_path_body_mismatch(self, api):
        body = save_portion(german_portion())
        status, doc = request(api, "PUT", "/portions/math/de", body)
        assert status == 400
        assert doc["error"] == "SchemaViolation"
        assert "chem.de" in doc["detail"]

    def test_put_malformed_body(self, api):
        status, doc = request(api, "PUT", "/portions/math/de", b"{")
        assert status == 400
        assert doc["error"] == "MalformedDocument"


class TestImportRoute:
    @pytest.fixture()
    def import_api(self, tmp_path, repo_server):
        config = ServerConfig(
            host="127.0.0.1",
            port=0,
            data_dir=tmp_path / "data",
            remote_repos=(RemoteRepoRef("fixture", repo_server),),
        )
        server = make_server(config)
        thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.05), daemon=True
        )
        thread.start()
        yield server.server_address[:2]
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)

    def test_import_then_already_current(self, import_api):
        body = {"repo": "fixture", "domain": "math", "language": "en"}
        status, doc = request(import_api, "POST", "/ontology/import", body)
        assert status == 200
        assert doc["outcome"] == "imported"
        assert (doc["version_before"], doc["version_after"]) == (None, 2)

        status, doc = request(import_api, "POST", "/ontology/import", body)
        assert status == 200
        assert doc["outcome"] == "already_current"

    def test_import_unknown_repo(self, import_api):
        status, doc = request(import_api, "POST", "/ontology/import", {
            "repo": "ghost", "domain": "math", "language": "en",
        })
        assert status == 404
        assert doc["error"] == "UnknownRepo"

    def test_import_missing_portion(self, import_api):
        status, doc = request(import_api, "POST", "/ontology/import", {
            "repo": "fixture", "domain": "math", "language": "xx",
        })
        assert status == 404
        assert doc["error"] == "PortionNotFound"
