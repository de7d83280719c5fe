"""Parsing of LLM responses into aspect analyses and MBTI codes."""

from __future__ import annotations

import json
import re

from ..corpus import TraitLabels

_ASPECT_KEYS = {
    "semantic": ("semantic",),
    "sentiment": ("sentiment", "emotion"),
    "linguistic": ("linguistic",),
}

_HEADER = re.compile(
    r"(?:^|(?<=[\s.;]))[#*\s\d.)-]*"
    r"(semantic\w*|sentiment\w*|emotion\w*|linguistic\w*)"
    r"(?:\s+(?:analysis|aspect|perspective)s?)?\s*\**\s*[:\-–]\s*\**",
    re.IGNORECASE,
)
_CODE = re.compile(r"\b([IE][SN][TF][PJ])\b", re.IGNORECASE)


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class DetectionParseError(ParseError):
    pass


def _aspect_of(name: str) -> str | None:
    name = name.lower()
    for aspect, stems in _ASPECT_KEYS.items():
        if any(s in name for s in stems):
            return aspect
    return None


def _from_json(raw: str) -> dict[str, str] | None:
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        obj = json.loads(raw[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    out = {}
    for key, value in obj.items():
        aspect = _aspect_of(str(key))
        if aspect and aspect not in out and isinstance(value, str) and value.strip():
            out[aspect] = value.strip()
    return out if len(out) == 3 else None


def _from_headers(raw: str) -> dict[str, str] | None:
    matches = list(_HEADER.finditer(raw))
    out = {}
    for n, m in enumerate(matches):
        aspect = _aspect_of(m.group(1))
        end = matches[n + 1].start() if n + 1 < len(matches) else len(raw)
        text = raw[m.end() : end].strip().rstrip(".").strip()
        if aspect and aspect not in out and text:
            out[aspect] = text
    return out if len(out) == 3 else None


def parse_aspects(raw: str) -> dict[str, str]:
    """Return ``{"semantic", "sentiment", "linguistic"}`` texts from a response.

    Structured JSON is tried first; otherwise the text is split on section
    headers such as ``Semantics:`` or ``**Emotional analysis** -``.
    """
    if not raw or not raw.strip():
        raise ParseError("empty response", raw)
    parsed = _from_json(raw) or _from_headers(raw)
    if parsed is None:
        raise ParseError("could not recover three aspect sections", raw)
    return parsed


def parse_mbti_code(raw: str) -> TraitLabels:
    m = _CODE.search(raw or "")
    if m is None:
        raise DetectionParseError("no MBTI type found in response", raw)
    return TraitLabels.from_code(m.group(1))
