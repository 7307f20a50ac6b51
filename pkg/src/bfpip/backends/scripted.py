"""Replay backend: responses keyed by (instance_id, config, repeat_index)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from ..errors import MissingFile, SchemaViolation, ScriptEntryMissing


class ScriptedBackend:
    def __init__(self, entries: dict[tuple[str, str, int], str]) -> None:
        self.entries = entries

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedBackend":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        entries: dict[tuple[str, str, int], str] = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key = (str(row["instance_id"]), str(row["config"]), int(row["repeat_index"]))
                entries[key] = str(row["text"])
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaViolation([("script", f"bad entry: {exc}", f"{path}:{lineno}")]) from None
        return cls(entries)

    def respond(self, instance_id: str, config: str, repeat_index: int) -> str:
        try:
            return self.entries[(instance_id, config, repeat_index)]
        except KeyError:
            raise ScriptEntryMissing(
                f"no scripted response for {instance_id} {config} repeat {repeat_index}"
            ) from None


def write_script(path: str | Path, rows: Iterable[tuple[str, str, int, str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps({"instance_id": i, "config": c, "repeat_index": r, "text": t}, sort_keys=True)
        for i, c, r, t in rows
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
