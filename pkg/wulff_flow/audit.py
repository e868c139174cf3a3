"""
JSONL audit trail for scenario runs.

Each entry carries the session id, an ISO timestamp and an event type, so a
run directory can be replayed stage by stage after the fact.
"""

import json
import logging
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


class AuditLogger:
    """Append-only event log of one run directory, one JSON object per line."""

    def __init__(self, log_dir: Path | str, log_file: str = "events.jsonl", scenario: str | None = None):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.log_dir / log_file
        self.scenario = scenario
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S")

    def log(self, event_type: str, data: dict[str, Any]) -> dict[str, Any]:
        entry = {
            "timestamp": datetime.now().isoformat(),
            "session_id": self.session_id,
            "event_type": event_type,
        }
        if self.scenario is not None:
            entry["scenario"] = self.scenario
        entry.update(data)
        with self.log_path.open("a") as f:
            f.write(json.dumps(entry, default=str) + "\n")
        return entry

    def _entries(self) -> list[dict[str, Any]]:
        if not self.log_path.exists():
            return []
        entries = []
        lines = self.log_path.read_text().splitlines()
        for i, line in enumerate(lines):
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                # a run killed mid-write leaves a partial last line
                if i != len(lines) - 1:
                    raise
                logger.warning("ignoring truncated last entry in %s", self.log_path)
        return entries

    def get_logs(self, event_type: str | None = None, stage: str | None = None) -> list[dict[str, Any]]:
        """Entries filtered by event type and, for stage events, by stage name."""
        return [
            e
            for e in self._entries()
            if (event_type is None or e.get("event_type") == event_type)
            and (stage is None or e.get("stage") == stage)
        ]

    def counts(self) -> Counter:
        return Counter(e.get("event_type") for e in self._entries())
