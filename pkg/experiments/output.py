"""CSV and JSON artifacts. Every file carries the run header (config hash, seed, version, PRNG)."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from normality.core import ValidationError

from . import RunRecord

logger = logging.getLogger(__name__)


def plain(value: Any) -> Any:
    """JSON-safe rendering: numpy scalars to Python, Fractions to 'p/q', non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def render_json(record: RunRecord) -> str:
    return json.dumps(plain(record.to_dict()), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, record: RunRecord) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(render_json(record), encoding="utf-8")
    logger.info(f"Wrote {p}")
    return p


def render_csv(record: RunRecord, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    header = record.header()
    buf.write("# " + " ".join(f"{k}={header[k]}" for k in sorted(header)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([plain(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, record: RunRecord, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(render_csv(record, columns, rows), encoding="utf-8")
    logger.info(f"Wrote {p}")
    return p


def write_run(directory: str | Path, stem: str, record: RunRecord, fmt: str) -> list[Path]:
    """Rows as <stem>.csv plus <stem>-summary.json, or everything in one <stem>.json when fmt is json."""
    d = Path(directory)
    if fmt == "json":
        return [write_json(d / f"{stem}.json", record)]
    if fmt != "csv":
        raise ValidationError(f"Unknown output format {fmt!r}; expected csv or json")
    columns = list(record.rows[0].keys()) if record.rows else []
    rows = ([row.get(c) for c in columns] for row in record.rows)
    summary = RunRecord(record.command, record.config_hash, record.seed, record.version, record.prng, record.summary)
    return [write_csv(d / f"{stem}.csv", record, columns, rows), write_json(d / f"{stem}-summary.json", summary)]


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    """Parse a CSV artifact back into dicts, skipping the header comment."""
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))
