"""Content-addressed response cache on the local filesystem.

Layout: ``<root>/<k[0:2]>/<k[2:4]>/<k>.response``. Writes go to a temp file
in the target directory followed by an atomic rename, so concurrent workers
never observe partial entries.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
import threading
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass(frozen=True)
class RawResponse:
    text: str
    latency_ms: float
    transport_status: str  # ok | rate_limited | transport_error | model_error
    attempt_count: int

    def to_bytes(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=True).encode("ascii")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "RawResponse":
        return cls(**json.loads(raw.decode("ascii")))


class ResponseCache:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.root / key[0:2] / key[2:4] / f"{key}.response"

    def get(self, key: str) -> RawResponse | None:
        p = self.path(key)
        try:
            data = p.read_bytes()
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return RawResponse.from_bytes(data)

    def put(self, key: str, response: RawResponse) -> Path:
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=p.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(response.to_bytes())
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return p

    def entries(self) -> list[Path]:
        if not self.root.is_dir():
            return []
        return sorted(self.root.glob("*/*/*.response"))

    def stats(self) -> dict[str, int]:
        files = self.entries()
        return {"entries": len(files), "bytes": sum(f.stat().st_size for f in files)}

    def purge(self) -> int:
        n = len(self.entries())
        if self.root.is_dir():
            for child in self.root.iterdir():
                if child.is_dir() and len(child.name) == 2:
                    shutil.rmtree(child)
        return n
