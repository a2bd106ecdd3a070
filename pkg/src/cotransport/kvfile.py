"""Flat ``key = value`` text files used for scenarios and experiment configs.

One assignment per line, ``#`` starts a comment, blank lines ignored.
Values stay strings at this layer; typing happens in the consumers.
"""
from __future__ import annotations

import os


class KvError(ValueError):
    """Malformed key-value file, with the offending location in the message."""


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KvError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise KvError(f"{source}:{lineno}: empty key")
        if key in out:
            raise KvError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_kv(path: str | os.PathLike) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), source=str(path))


def dump_kv(pairs: dict[str, str]) -> str:
    """Serialize with sorted keys so round-trips and diffs are stable."""
    lines = [f"{k} = {pairs[k]}" for k in sorted(pairs)]
    return "\n".join(lines) + "\n"
