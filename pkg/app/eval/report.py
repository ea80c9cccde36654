from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from app.eval.metrics import TABLE_COLUMNS, MetricReport

Row = Union[MetricReport, str, None]


def report_frame(rows: Mapping[str, Row]) -> pd.DataFrame:
    """
    One row per config name. A MetricReport fills the four metric columns
    (percent, 2 decimals); a string or None marks a failed run.
    """
    records = []
    for name, row in rows.items():
        if isinstance(row, MetricReport):
            records.append({"config": name, **row.as_percent(), "status": "ok"})
        else:
            records.append({
                "config": name,
                **{col: np.nan for col in TABLE_COLUMNS},
                "status": f"failed: {row}" if row else "failed",
            })
    return pd.DataFrame.from_records(records, columns=["config", *TABLE_COLUMNS, "status"])


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda v: f"{v:.2f}", na_rep="--")


def write_report(frame: pd.DataFrame, out_dir: Path, stem: str = "metrics") -> Dict[str, Path]:
    """Writes <stem>.txt (aligned table) and <stem>.json (records keyed by config)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / f"{stem}.txt"
    txt.write_text(format_table(frame) + "\n", encoding="utf-8")

    payload = {}
    for record in frame.to_dict(orient="records"):
        name = record.pop("config")
        payload[name] = {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in record.items()}
    js = out_dir / f"{stem}.json"
    js.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return {"table": txt, "json": js}


def single_report(report: MetricReport, name: Optional[str] = None) -> pd.DataFrame:
    return report_frame({name or report.mode: report})
