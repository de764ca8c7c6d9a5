"""Dataset loading and deterministic split sampling."""

from __future__ import annotations

import json
import logging
import random
import struct
import zlib
from pathlib import Path
from typing import Sequence

from .errors import DatasetError, InputError
from .types import Episode

log = logging.getLogger(__name__)

_REQUIRED_FIELDS = ("id", "image_path", "caption", "dataset")


def load_dataset(path: str | Path) -> list[Episode]:
    """Read a JSONL dataset into Episodes.

    Each line is a JSON object with id, image_path, caption, dataset, and an
    optional references list. Relative image paths resolve against the
    dataset file's directory. Episodes whose image file is missing are
    skipped with a warning; a malformed line raises DatasetError naming it.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    episodes: list[Episode] = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc}", line_number=line_number) from exc
            if not isinstance(row, dict):
                raise DatasetError("line is not a JSON object", line_number=line_number)
            missing = [f for f in _REQUIRED_FIELDS if f not in row]
            if missing:
                raise DatasetError(
                    f"missing fields: {', '.join(missing)}", line_number=line_number
                )
            image = Path(str(row["image_path"]))
            if not image.is_absolute():
                image = path.parent / image
            if not image.exists():
                log.warning(
                    "%s line %d: image %s missing, episode %r skipped",
                    path.name, line_number, image, row["id"],
                )
                continue
            refs = row.get("references") or []
            if isinstance(refs, str):
                refs = [refs]
            try:
                episode = Episode(
                    id=str(row["id"]),
                    image=str(image),
                    caption=str(row["caption"]),
                    dataset=str(row["dataset"]),
                    references=tuple(str(r) for r in refs),
                )
            except ValueError as exc:
                raise DatasetError(str(exc), line_number=line_number) from exc
            episodes.append(episode)
    return episodes


def sample_split(episodes: Sequence[Episode], n: int, seed: int) -> list[Episode]:
    """Uniform sample of n episodes without replacement, deterministic in the
    seed. The sample keeps the episodes' original order."""
    if n > len(episodes):
        raise InputError(f"cannot sample {n} episodes from {len(episodes)}")
    indices = random.Random(seed).sample(range(len(episodes)), n)
    return [episodes[i] for i in sorted(indices)]


def tiny_png_bytes() -> bytes:
    """A valid 1x1 grayscale PNG, for synthetic datasets and tests."""

    def chunk(kind: bytes, payload: bytes) -> bytes:
        crc = zlib.crc32(kind + payload) & 0xFFFFFFFF
        return struct.pack(">I", len(payload)) + kind + payload + struct.pack(">I", crc)

    ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
    idat = zlib.compress(b"\x00\xff")
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )
