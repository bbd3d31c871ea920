"""Unicode text normalization and word splitting.

Everything that compares text anywhere in the package (labels, queries,
index tokens, detector input) goes through normalize_text, so equality is
always up to NFC, case folding, and Arabic vocalization.
"""

from __future__ import annotations

import re
import unicodedata

from .errors import InvalidIdentifier, InvalidLanguageTag

# Arabic tashkeel (U+064B..U+0652) and tatweel (U+0640): optional marks that
# must not distinguish otherwise-equal words.
_STRIP = {cp: None for cp in [0x0640, *range(0x064B, 0x0653)]}

_IDENT_RE = re.compile(r"[A-Za-z0-9_-]+\Z")
_LANG_RE = re.compile(r"[a-z]{2,3}\Z")


def normalize_text(text: str) -> str:
    """NFC, strip tashkeel/tatweel, casefold, collapse whitespace runs.

    Idempotent: normalize_text(normalize_text(x)) == normalize_text(x).
    """
    text = unicodedata.normalize("NFC", text)
    text = text.translate(_STRIP)
    text = unicodedata.normalize("NFC", text.casefold())
    return " ".join(text.split())


def _camel_parts(word: str) -> list[str]:
    # Split before an uppercase letter that follows a lowercase letter or a
    # digit, and before the last uppercase letter of an acronym run
    # ("HTTPServer" -> "HTTP", "Server").
    parts: list[str] = []
    start = 0
    for i in range(1, len(word)):
        prev, cur = word[i - 1], word[i]
        if not cur.isupper():
            continue
        nxt = word[i + 1] if i + 1 < len(word) else ""
        if prev.islower() or prev.isdigit() or (prev.isupper() and nxt.islower()):
            parts.append(word[start:i])
            start = i
    parts.append(word[start:])
    return parts


def split_words(text: str) -> list[str]:
    """Split text into normalized word tokens.

    Boundaries are whitespace, punctuation and symbol characters (Unicode
    categories P* and S*, which covers snake_case underscores), and
    camelCase transitions. Digits stay attached to their word. Pieces that
    normalize to nothing are dropped.
    """
    text = unicodedata.normalize("NFC", text)
    pieces: list[str] = []
    current: list[str] = []
    for ch in text:
        if ch.isspace() or unicodedata.category(ch)[0] in "PS":
            if current:
                pieces.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        pieces.append("".join(current))

    tokens: list[str] = []
    for piece in pieces:
        for part in _camel_parts(piece):
            norm = normalize_text(part)
            if norm:
                tokens.append(norm)
    return tokens


def check_identifier(value: str, what: str = "identifier") -> str:
    """Validate a domain or local-name identifier ([A-Za-z0-9_-]+)."""
    if not isinstance(value, str) or not _IDENT_RE.match(value):
        raise InvalidIdentifier(f"{what} {value!r} must match [A-Za-z0-9_-]+")
    return value


def check_language(tag: str) -> str:
    """Validate a lowercase two- or three-letter language tag."""
    if not isinstance(tag, str) or not _LANG_RE.match(tag):
        raise InvalidLanguageTag(f"language tag {tag!r} must match [a-z]{{2,3}}")
    return tag
