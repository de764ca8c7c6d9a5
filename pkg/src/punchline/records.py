"""Run records: one JSON object per episode, append-only JSONL persistence.

Serialization is byte-stable (sorted keys, no timestamps or latencies), so a
rerun with identical inputs produces identical bytes. A crashed run's file is
always a valid prefix because every record is flushed as one line.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import DatasetError
from .types import MODES, HopState

SCHEMA_VERSION = 1

STATUSES = ("ok", "failed", "partial")


@dataclass(frozen=True)
class EpisodeRecord:
    """Everything one episode run produced, including intermediate hop state
    and a hash-only log of backend calls."""

    episode_id: str
    mode: str
    config: dict[str, Any]
    status: str
    hop_states: tuple[HopState, ...] = ()
    final_answer: str | None = None
    final_prompt: str | None = None
    per_hop_best: tuple[dict[str, Any], ...] = ()
    call_log: tuple[tuple[str, str], ...] = ()
    flags: tuple[str, ...] = ()
    error: str | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        object.__setattr__(self, "hop_states", tuple(self.hop_states))
        object.__setattr__(self, "per_hop_best", tuple(dict(d) for d in self.per_hop_best))
        object.__setattr__(
            self, "call_log", tuple((str(p), str(r)) for p, r in self.call_log)
        )
        object.__setattr__(self, "flags", tuple(self.flags))
        if self.mode == "pipeline" and self.status == "ok":
            expected = int(self.config.get("hops", 0)) + 1
            if len(self.hop_states) != expected:
                raise ValueError(
                    f"ok pipeline record needs {expected} hop states, has {len(self.hop_states)}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "episode_id": self.episode_id,
            "mode": self.mode,
            "config": dict(self.config),
            "status": self.status,
            "hop_states": [h.to_dict() for h in self.hop_states],
            "final_answer": self.final_answer,
            "final_prompt": self.final_prompt,
            "per_hop_best": [dict(d) for d in self.per_hop_best],
            "call_log": [[p, r] for p, r in self.call_log],
            "flags": list(self.flags),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EpisodeRecord":
        return cls(
            episode_id=d["episode_id"],
            mode=d["mode"],
            config=dict(d["config"]),
            status=d["status"],
            hop_states=tuple(HopState.from_dict(h) for h in d["hop_states"]),
            final_answer=d.get("final_answer"),
            final_prompt=d.get("final_prompt"),
            per_hop_best=tuple(d.get("per_hop_best", ())),
            call_log=tuple((p, r) for p, r in d.get("call_log", ())),
            flags=tuple(d.get("flags", ())),
            error=d.get("error"),
            schema_version=int(d.get("schema_version", SCHEMA_VERSION)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        return cls.from_dict(json.loads(line))


class RecordWriter:
    """Append-only JSONL writer; thread-safe, flushes per record so a crash
    leaves a valid prefix."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self._mode = "a" if append else "w"
        self._lock = threading.Lock()
        self._fh = None

    def __enter__(self) -> "RecordWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, self._mode, encoding="utf-8")
        return self

    def write(self, record: EpisodeRecord) -> None:
        if self._fh is None:
            raise ValueError("RecordWriter used outside its context")
        line = record.to_json()
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def __exit__(self, *exc_info) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_records(path: str | Path) -> list[EpisodeRecord]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"record file not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(EpisodeRecord.from_json(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DatasetError(
                    f"bad record: {exc}", line_number=line_number
                ) from exc
    return records
