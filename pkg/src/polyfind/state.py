"""File-backed state: atomic persistence, startup loading, and the single
writer that mutates store snapshots.

Disk layout under data_dir:

    portions/<domain>.<lang>.json
    alignments/<domain>.json      one file per canonical (smaller) domain
    services/<id>.xml
    bindings.log                  append-only JSON lines
    seq                           last assigned service sequence number

Every write lands in a temporary file in the same directory followed by an
atomic rename, so a kill at any instant leaves either the old or the new
content, never a torn file. Readers work on immutable snapshots; all
mutations flow through one lock, persist first, then swap the snapshot.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from . import importer as imp
from . import ontology as onto
from . import registry as reg
from .config import ServerConfig
from .descriptor import ServiceDescriptor, parse_descriptor, serialize_descriptor
from .discovery import DiscoveryResponse, Query, discover
from .errors import (
    ImportInProgress,
    InvariantViolation,
    PolyfindError,
    StartupError,
    UnknownRepo,
)
from .langdetect import TrigramProfile, load_profiles, packaged_corpora_dir
from .registry import BindingTicket

log = logging.getLogger(__name__)

_SERVICE_FILE_RE = re.compile(r"(s-\d{6,})\.xml\Z")
_PORTION_FILE_RE = re.compile(r"([A-Za-z0-9_-]+)\.([a-z]{2,3})\.json\Z")


@dataclass(frozen=True)
class Snapshot:
    ontology: onto.OntologyStore
    registry: reg.RegistryStore


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a sibling temp file and rename; never leaves a torn file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _portions_dir(data_dir: Path) -> Path:
    return data_dir / "portions"


def _alignments_dir(data_dir: Path) -> Path:
    return data_dir / "alignments"


def _services_dir(data_dir: Path) -> Path:
    return data_dir / "services"


def _canonical_domain(link: onto.AlignmentLink) -> str:
    return min(link.source.term.domain, link.target.term.domain)


def load_snapshot(data_dir: Path) -> Snapshot:
    """Rebuild both stores from disk; any unreadable file fails startup by name."""
    store = onto.empty_store()
    portion_dir = _portions_dir(data_dir)
    if portion_dir.is_dir():
        for path in sorted(portion_dir.iterdir()):
            if path.suffix == ".tmp" or not path.is_file():
                continue
            m = _PORTION_FILE_RE.match(path.name)
            if not m:
                raise StartupError(f"unexpected file in portions/: {path}")
            try:
                portion = onto.load_portion(path.read_bytes())
            except PolyfindError as exc:
                raise StartupError(f"corrupt portion file {path}: {exc}") from exc
            if (portion.domain, portion.language) != (m.group(1), m.group(2)):
                raise StartupError(
                    f"portion file {path} holds {portion.domain}.{portion.language}"
                )
            violations = onto.validate_portion(portion)
            if violations:
                raise StartupError(
                    f"invalid portion file {path}: " + "; ".join(str(v) for v in violations)
                )
            store = onto.set_portion(store, portion)
    alignment_dir = _alignments_dir(data_dir)
    if alignment_dir.is_dir():
        for path in sorted(alignment_dir.iterdir()):
            if path.suffix == ".tmp" or not path.is_file():
                continue
            try:
                links = onto.load_alignments(path.read_bytes())
                for link in links:
                    store = onto.add_alignment(store, link)
            except PolyfindError as exc:
                raise StartupError(f"corrupt alignment file {path}: {exc}") from exc
    descriptors = []
    service_dir = _services_dir(data_dir)
    if service_dir.is_dir():
        for path in sorted(service_dir.iterdir()):
            if path.suffix == ".tmp" or not path.is_file():
                continue
            m = _SERVICE_FILE_RE.match(path.name)
            if not m:
                raise StartupError(f"unexpected file in services/: {path}")
            try:
                parsed = parse_descriptor(path.read_bytes())
            except PolyfindError as exc:
                raise StartupError(f"corrupt service file {path}: {exc}") from exc
            descriptors.append(replace(parsed, service_id=m.group(1)))
    seq_path = data_dir / "seq"
    seq = 0
    if seq_path.exists():
        text = seq_path.read_text("utf-8").strip()
        if not text.isdigit():
            raise StartupError(f"corrupt seq file {seq_path}: {text!r}")
        seq = int(text)
    max_id = max(
        (int(d.service_id.rsplit("-", 1)[-1]) for d in descriptors), default=0
    )
    registry_store = reg.registry_from_descriptors(descriptors, last_seq=max(seq, max_id))
    return Snapshot(store, registry_store)


class AppState:
    """Owns the current snapshot and the write path. Thread-safe."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        profile_dir = config.profile_dir or packaged_corpora_dir()
        try:
            self.profiles: tuple[TrigramProfile, ...] = tuple(load_profiles(profile_dir))
        except PolyfindError as exc:
            raise StartupError(f"cannot build detector profiles from {profile_dir}: {exc}") from exc
        self._snapshot = load_snapshot(self.data_dir)
        self._lock = threading.Lock()
        self._imports_in_flight: dict[tuple[str, str], threading.Event] = {}
        # Probe writability early so a read-only volume fails at startup.
        seq_path = self.data_dir / "seq"
        if not seq_path.exists():
            try:
                atomic_write_bytes(seq_path, b"0\n")
            except OSError as exc:
                raise StartupError(f"data_dir {self.data_dir} is not writable: {exc}") from exc

    # --- reads ---

    def snapshot(self) -> Snapshot:
        return self._snapshot

    def health(self) -> dict:
        snap = self._snapshot
        return {
            "status": "ok",
            "services": len(snap.registry.descriptors),
            "portions": len(snap.ontology.portions),
        }

    # --- persistence helpers (call with the lock held) ---

    def _persist_portion(self, portion: onto.OntologyPortion) -> None:
        path = _portions_dir(self.data_dir) / f"{portion.domain}.{portion.language}.json"
        atomic_write_bytes(path, onto.save_portion(portion))

    def _sync_alignment_files(self, store: onto.OntologyStore) -> None:
        groups: dict[str, list[onto.AlignmentLink]] = {}
        for link in onto.iter_links(store):
            groups.setdefault(_canonical_domain(link), []).append(link)
        directory = _alignments_dir(self.data_dir)
        for domain, links in groups.items():
            atomic_write_bytes(directory / f"{domain}.json", onto.save_alignments(links))
        if directory.is_dir():
            for path in directory.iterdir():
                if path.suffix == ".json" and path.stem not in groups:
                    path.unlink()

    # --- writes ---

    def publish_descriptor(self, document: bytes) -> str:
        descriptor = parse_descriptor(document)
        with self._lock:
            new_registry, service_id = reg.publish(self._snapshot.registry, descriptor)
            published = new_registry.descriptors[service_id]
            path = _services_dir(self.data_dir) / f"{service_id}.xml"
            atomic_write_bytes(path, serialize_descriptor(published))
            atomic_write_bytes(self.data_dir / "seq", f"{new_registry.last_seq}\n".encode())
            self._snapshot = Snapshot(self._snapshot.ontology, new_registry)
        return service_id

    def remove_service(self, service_id: str) -> None:
        with self._lock:
            new_registry = reg.remove(self._snapshot.registry, service_id)
            path = _services_dir(self.data_dir) / f"{service_id}.xml"
            if path.exists():
                path.unlink()
            self._snapshot = Snapshot(self._snapshot.ontology, new_registry)

    def put_portion(self, portion: onto.OntologyPortion) -> None:
        violations = onto.validate_portion(portion)
        if violations:
            raise InvariantViolation(
                "portion is structurally invalid: " + "; ".join(str(v) for v in violations)
            )
        with self._lock:
            new_store = onto.set_portion(self._snapshot.ontology, portion)
            self._persist_portion(portion)
            self._sync_alignment_files(new_store)
            self._snapshot = Snapshot(new_store, self._snapshot.registry)

    def bind_service(self, service_id: str, requester_id: str) -> BindingTicket:
        with self._lock:
            ticket = reg.bind(self._snapshot.registry, service_id, requester_id)
            line = json.dumps(
                {
                    "ticket_id": ticket.ticket_id,
                    "service_id": ticket.service_id,
                    "requester_id": ticket.requester_id,
                    "endpoint": ticket.endpoint,
                    "issued_at": ticket.issued_at,
                },
                ensure_ascii=False,
            )
            journal = self.data_dir / "bindings.log"
            with open(journal, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        return ticket

    def find_repo(self, name: str) -> imp.RemoteRepoRef:
        for repo in self.config.remote_repos:
            if repo.name == name:
                return repo
        raise UnknownRepo(f"no configured repository {name!r}")

    def import_portion(
        self, repo_name: str, domain: str, language: str, wait: bool = True
    ) -> imp.ImportReport:
        """Fetch outside the lock, merge+persist+swap inside it.

        Imports of the same (domain, language) are serialized; with
        wait=False a concurrent second call raises ImportInProgress.
        """
        repo = self.find_repo(repo_name)
        key = (domain, language)
        event = threading.Event()
        while True:
            with self._lock:
                current = self._imports_in_flight.get(key)
                if current is None:
                    self._imports_in_flight[key] = event
                    break
            if not wait:
                raise ImportInProgress(f"import of {domain}.{language} already running")
            current.wait()
        try:
            fetched = imp.fetch_portion_docs(
                repo, domain, language, timeout=self.config.network_timeout
            )
            with self._lock:
                merged, report = imp.merge_portion(self._snapshot.ontology, fetched)
                if report.outcome in ("imported", "upgraded"):
                    self._persist_portion(merged.portions[key])
                    self._sync_alignment_files(merged)
                    self._snapshot = Snapshot(merged, self._snapshot.registry)
            return report
        finally:
            with self._lock:
                del self._imports_in_flight[key]
            event.set()

    # --- discovery ---

    def _import_for_discovery(
        self, domain: str, language: str
    ) -> tuple[onto.OntologyStore, tuple[imp.ImportReport, ...]]:
        reports: list[imp.ImportReport] = []
        for repo in self.config.remote_repos:
            try:
                report = self.import_portion(repo.name, domain, language, wait=True)
            except PolyfindError as exc:
                log.warning(
                    "import of %s.%s from %r failed: %s", domain, language, repo.name, exc
                )
                continue
            reports.append(report)
            if (domain, language) in self._snapshot.ontology.portions:
                break
        return self._snapshot.ontology, tuple(reports)

    def discover(self, query: Query) -> DiscoveryResponse:
        snap = self._snapshot
        return discover(
            query,
            snap.ontology,
            snap.registry,
            self.profiles,
            expansion_depth=self.config.expansion_depth,
            weights=self.config.field_weights,
            import_missing=self._import_for_discovery,
        )
