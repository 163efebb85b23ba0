"""Report records and their CSV / JSON serializations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

HEADER = ("experiment", "config_hash", "metric", "value", "units")


@dataclass(frozen=True)
class ReportRecord:
    experiment: str
    config_hash: str
    metric: str
    value: float | int | str
    units: str

    def __post_init__(self):
        for name in ("experiment", "config_hash", "metric", "units"):
            text = getattr(self, name)
            if not isinstance(text, str) or any(not c.isprintable() for c in text):
                raise ValueError(f"{name} must be printable text, got {text!r}")
        if not self.metric:
            raise ValueError("metric name must be nonempty")


def _value(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([r.experiment, r.config_hash, r.metric, _value(r.value), r.units])
    return buf.getvalue()


def records_json(records) -> str:
    doc = {"columns": list(HEADER), "records": [asdict(r) for r in records]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_reports(records, out_dir, stem: str = "report", formats=("csv", "json")) -> list[Path]:
    """Write `stem.csv` and/or `stem.json`; output is byte-stable for equal records."""
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        text = {"csv": records_csv, "json": records_json}[fmt](records)
        path = out / f"{stem}.{fmt}"
        path.write_text(text)
        written.append(path)
    return written
