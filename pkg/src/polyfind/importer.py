"""Fetching ontology portions from remote repositories and merging them in.

A repository is a plain HTTP tree: catalog.json at the root, portion
documents under portions/<domain>.<lang>.json, optional alignment documents
under alignments/<domain>.json. Fetch and merge are separate steps so a
server can do network I/O outside its write lock; merge is pure and either
returns a fully updated store or raises, never a partial state.
"""

from __future__ import annotations

import hashlib
import json
import logging
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import (
    MalformedCatalog,
    MalformedDocument,
    PortionNotFound,
    RepoUnreachable,
    SchemaViolation,
    ValidationFailed,
)
from .ontology import (
    OntologyStore,
    add_alignment,
    load_alignments,
    load_portion,
    resolve,
    save_portion,
    set_portion,
    validate_portion,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0

OUTCOMES = ("imported", "upgraded", "already_current", "rejected")


@dataclass(frozen=True)
class RemoteRepoRef:
    name: str
    base_url: str


@dataclass(frozen=True)
class ImportReport:
    repo: str
    domain: str
    language: str
    outcome: str  # one of OUTCOMES
    version_before: int | None
    version_after: int | None
    detail: str = ""


@dataclass(frozen=True)
class FetchedPortion:
    """Raw documents pulled from a repository, not yet validated or merged."""

    repo: str
    domain: str
    language: str
    portion_doc: bytes
    alignment_doc: bytes | None


class _NotFound(Exception):
    pass


def _fetch(url: str, timeout: float) -> bytes:
    # One retry on transport errors; HTTP 404 is meaningful and not retried.
    last: Exception | None = None
    for attempt in range(2):
        try:
            with urllib.request.urlopen(url, timeout=timeout) as response:
                return response.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise _NotFound(url) from exc
            raise RepoUnreachable(f"GET {url} answered HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            last = exc
            if attempt == 0:
                log.warning("retrying %s after %s", url, exc)
    raise RepoUnreachable(f"GET {url} failed: {last}") from last


def fetch_catalog(repo: RemoteRepoRef, timeout: float = DEFAULT_TIMEOUT) -> list[dict]:
    url = f"{repo.base_url.rstrip('/')}/catalog.json"
    try:
        data = _fetch(url, timeout)
    except _NotFound as exc:
        raise RepoUnreachable(f"repository {repo.name!r} has no catalog.json") from exc
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedCatalog(f"catalog of {repo.name!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"portions"} or not isinstance(
        doc["portions"], list
    ):
        raise MalformedCatalog(f"catalog of {repo.name!r} must be {{\"portions\": [...]}}")
    entries = []
    for i, entry in enumerate(doc["portions"]):
        if (
            not isinstance(entry, dict)
            or set(entry) != {"domain", "language", "version"}
            or not isinstance(entry.get("domain"), str)
            or not isinstance(entry.get("language"), str)
            or not isinstance(entry.get("version"), int)
            or isinstance(entry.get("version"), bool)
        ):
            raise MalformedCatalog(
                f"catalog entry {i} of {repo.name!r} must carry domain, language, version"
            )
        entries.append(entry)
    return entries


def list_remote(repo: RemoteRepoRef, timeout: float = DEFAULT_TIMEOUT) -> list[tuple[str, str, int]]:
    """Portions a repository offers, as (domain, language, version) tuples."""
    return [(e["domain"], e["language"], e["version"]) for e in fetch_catalog(repo, timeout)]


def fetch_portion_docs(
    repo: RemoteRepoRef, domain: str, language: str, timeout: float = DEFAULT_TIMEOUT
) -> FetchedPortion:
    """Pull the portion document and, when present, the domain's alignments."""
    base = repo.base_url.rstrip("/")
    try:
        portion_doc = _fetch(f"{base}/portions/{domain}.{language}.json", timeout)
    except _NotFound as exc:
        raise PortionNotFound(
            f"repository {repo.name!r} has no portion {domain}.{language}"
        ) from exc
    try:
        alignment_doc = _fetch(f"{base}/alignments/{domain}.json", timeout)
    except _NotFound:
        alignment_doc = None
    return FetchedPortion(repo.name, domain, language, portion_doc, alignment_doc)


def _content_hash(portion) -> str:
    return hashlib.sha256(save_portion(portion)).hexdigest()


def merge_portion(store: OntologyStore, fetched: FetchedPortion) -> tuple[OntologyStore, ImportReport]:
    """Validate fetched documents and merge them into the store.

    Version policy against the local portion, if any: newer wins
    (upgraded), absent is inserted (imported), same version with equal
    content is a no-op (already_current), anything else is rejected.
    Alignment links whose endpoints do not resolve after the merge are
    dropped; structurally invalid remote content raises ValidationFailed
    and leaves the store untouched.
    """
    try:
        remote = load_portion(fetched.portion_doc)
    except (MalformedDocument, SchemaViolation) as exc:
        raise ValidationFailed(f"portion document from {fetched.repo!r}: {exc}") from exc
    if remote.domain != fetched.domain or remote.language != fetched.language:
        raise ValidationFailed(
            f"portion from {fetched.repo!r} says {remote.domain}.{remote.language},"
            f" expected {fetched.domain}.{fetched.language}"
        )
    violations = validate_portion(remote)
    if violations:
        raise ValidationFailed(
            f"portion {fetched.domain}.{fetched.language} from {fetched.repo!r} is invalid: "
            + "; ".join(str(v) for v in violations)
        )
    links = []
    if fetched.alignment_doc is not None:
        try:
            links = load_alignments(fetched.alignment_doc)
        except (MalformedDocument, SchemaViolation) as exc:
            raise ValidationFailed(f"alignment document from {fetched.repo!r}: {exc}") from exc

    local = store.portions.get((fetched.domain, fetched.language))

    def report(outcome: str, detail: str = "") -> ImportReport:
        return ImportReport(
            fetched.repo,
            fetched.domain,
            fetched.language,
            outcome,
            None if local is None else local.version,
            remote.version,
            detail,
        )

    if local is not None:
        if remote.version < local.version:
            return store, report("rejected", "remote version is older than local")
        if remote.version == local.version:
            if _content_hash(remote) == _content_hash(local):
                return store, report("already_current")
            return store, report("rejected", "same version but different content")
        outcome = "upgraded"
    else:
        outcome = "imported"
    merged = set_portion(store, remote)
    for link in links:
        if resolve(merged, link.source) is None or resolve(merged, link.target) is None:
            continue  # may reference portions we do not hold; not an error
        if link.source.lang == link.target.lang:
            raise ValidationFailed(
                f"alignment document from {fetched.repo!r} links two {link.source.lang!r} terms"
            )
        merged = add_alignment(merged, link)
    return merged, report(outcome)


def import_portion(
    repo: RemoteRepoRef,
    domain: str,
    language: str,
    store: OntologyStore,
    timeout: float = DEFAULT_TIMEOUT,
) -> tuple[OntologyStore, ImportReport]:
    """Fetch and merge in one call."""
    return merge_portion(store, fetch_portion_docs(repo, domain, language, timeout))


def report_to_dict(report: ImportReport) -> dict:
    return {
        "repo": report.repo,
        "domain": report.domain,
        "language": report.language,
        "outcome": report.outcome,
        "version_before": report.version_before,
        "version_after": report.version_after,
        "detail": report.detail,
    }
