"""JSON checkpoint container shared by encoder and ranking-model files.

Layout::

    {"format": "drugrank-checkpoint", "version": 1, "kind": "...",
     "folds": {"0": {"layers": {...}, "extra": {...}}, ...}, "meta": {...}}

Weights are stored row-major as plain float lists; Python's float repr
round-trips float64 exactly, so a load/save cycle is lossless.
"""
import json
from pathlib import Path

from .errors import ConfigError

FORMAT = "drugrank-checkpoint"
VERSION = 1


def save(path, kind: str, folds: dict, meta: dict | None = None):
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "meta": meta or {},
        "folds": {str(k): v for k, v in sorted(folds.items())},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)


def load(path, kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing {kind} checkpoint: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"unreadable checkpoint {path}: {exc}") from None
    if blob.get("format") != FORMAT or blob.get("version") != VERSION:
        raise ConfigError(f"{path} is not a version-{VERSION} {FORMAT} file")
    if blob.get("kind") != kind:
        raise ConfigError(f"{path} holds a {blob.get('kind')!r} checkpoint, expected {kind!r}")
    blob["folds"] = {int(k): v for k, v in blob["folds"].items()}
    return blob
