"""Content-addressed cache for model responses.

Keys hash together (backend id, prompt, temperature, seed); values are
written atomically (temp file + rename), so concurrent writers of the same
key land on a consistent entry. Corrupt entries read as misses and are
evicted.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


class ResponseCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(backend_id: str, prompt: str, temperature: float, seed: int | None) -> str:
        h = hashlib.sha256()
        for part in (backend_id, prompt, repr(float(temperature)), repr(seed)):
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            value = payload["value"]
            if not isinstance(value, str):
                raise ValueError("cache value must be a string")
        except FileNotFoundError:
            self.misses += 1
            return None
        except (ValueError, KeyError, OSError):
            # Corrupt entry: evict so the slot heals on the next put.
            try:
                os.unlink(path)
            except OSError:
                pass
            self.misses += 1
            return None
        self.hits += 1
        return value

    def put(self, key: str, value: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump({"value": value}, fh)
            os.replace(tmp, self._path(key))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


def cache_get(root: str | Path, key: str) -> str | None:
    return ResponseCache(root).get(key)


def cache_put(root: str | Path, key: str, value: str) -> None:
    ResponseCache(root).put(key, value)
