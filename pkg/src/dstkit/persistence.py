"""Append-only per-session event logs.

One JSONL file per session under the store directory; every event is one
JSON object per line, flushed before the caller proceeds. Restart recovery
reads the log back and replays it (see engine.load_session), so the log is
the single source of truth for session state.
"""

from __future__ import annotations

import json
import os
from pathlib import Path


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        if not session_id.replace("-", "").replace("_", "").isalnum():
            raise ValueError(f"unsafe session id {session_id!r}")
        return self.root / f"{session_id}.jsonl"

    def append(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False)
        with open(self._path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read(self, session_id: str) -> list[dict]:
        path = self._path(session_id)
        if not path.exists():
            return []
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def exists(self, session_id: str) -> bool:
        return self._path(session_id).exists()

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))
