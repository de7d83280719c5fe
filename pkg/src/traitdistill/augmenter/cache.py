"""Append-only JSONL cache of LLM generations."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import NamedTuple


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class CacheKey(NamedTuple):
    prompt_version: str
    model_id: str
    post_hash: str


class CacheConflictError(KeyError):
    pass


class GenerationCache:
    """Maps ``(prompt_version, model_id, post_hash)`` to a stored response.

    Each line of the backing file is
    ``{"key": {...}, "response": str, "parsed": obj|null, "timestamp": float}``.
    Writes go through one lock and only ever add keys, so readers need no
    lock (single dict lookups are atomic in CPython).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._index: dict[CacheKey, dict] = {}
        if self.path is not None and self.path.exists():
            self._index = self._load(self.path)

    @staticmethod
    def _load(path: Path) -> dict[CacheKey, dict]:
        index = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted run
                    continue
                key = CacheKey(**entry["key"])
                index.setdefault(key, entry)
        return index

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, key) -> bool:
        return CacheKey(*key) in self._index

    def get(self, key) -> dict | None:
        return self._index.get(CacheKey(*key))

    def put(self, key, response: str, parsed=None) -> dict:
        key = CacheKey(*key)
        entry = {"key": key._asdict(), "response": response, "parsed": parsed, "timestamp": time.time()}
        with self._lock:
            if key in self._index:
                raise CacheConflictError(f"cache already holds an entry for {key}")
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                    fh.flush()
            self._index[key] = entry
        return entry
