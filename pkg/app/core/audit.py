# app/core/audit.py
from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, Dict

from app import __version__
from app.core import settings


def _now_ms() -> int:
    return int(time.time() * 1000)


def _jsonable(value: Any) -> Any:
    # numpy/torch scalars and paths show up in events
    if hasattr(value, "item") and callable(value.item):
        try:
            return value.item()
        except (TypeError, ValueError):
            pass
    if isinstance(value, Path):
        return str(value)
    return str(value)


def append_jsonl(path: Path, record: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, default=_jsonable) + "\n")


def write_audit_event(event: Dict[str, Any]) -> None:
    """
    Append a single JSON event to <AUDIT_LOG_DIR>/audit.jsonl (one object per line).
    """
    enriched = {
        "ts_ms": _now_ms(),
        "version": __version__,
        **event,
    }
    append_jsonl(settings.audit_log_dir() / "audit.jsonl", enriched)
