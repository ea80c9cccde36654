import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def output_dir() -> Path:
    return Path(os.getenv("DTNET_OUTPUT_DIR", "runs"))


def audit_log_dir() -> Path:
    return Path(os.getenv("AUDIT_LOG_DIR", ".logs"))


def log_level() -> str:
    return os.getenv("DTNET_LOG_LEVEL", "INFO").upper()


def device() -> str:
    return os.getenv("DTNET_DEVICE", "cpu")


def num_threads() -> int | None:
    raw = os.getenv("DTNET_NUM_THREADS", "").strip()
    if not raw:
        return None
    value = int(raw)
    if value < 1:
        raise RuntimeError("DTNET_NUM_THREADS must be a positive integer")
    return value


def default_checkpoint() -> Path | None:
    raw = os.getenv("DTNET_CHECKPOINT", "").strip()
    return Path(raw) if raw else None
