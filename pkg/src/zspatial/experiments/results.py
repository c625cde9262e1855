"""Result rows and their CSV serialization.

Files start with ``# key=value`` metadata lines (scenario, preset, config
hash), followed by the fixed column header and one row per run.  Floats are
written with 10 significant digits so identical computations give identical
bytes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

COLUMNS = ("scenario", "mode", "power_dbm", "l2_km", "seed", "mi_bits", "eta", "ci_low", "ci_high", "wall_s")


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    mode: str
    power_dbm: float
    l2_km: float
    seed: int
    mi_bits: float
    eta: float
    ci_low: float
    ci_high: float
    wall_s: float = math.nan


assert tuple(f.name for f in fields(ResultRow)) == COLUMNS


def fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.10g}"
    return str(v)


def render_csv(rows, meta: dict | None = None, columns=COLUMNS) -> str:
    buf = io.StringIO()
    for k in sorted(meta or {}):
        buf.write(f"# {k}={meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in (astuple(r) if isinstance(r, ResultRow) else r)])
    return buf.getvalue()


def write_csv(path, rows, meta: dict | None = None, columns=COLUMNS) -> Path:
    path = Path(path)
    path.write_text(render_csv(rows, meta, columns))
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Return ``(metadata, rows)`` with rows as string dictionaries."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def csv_body(path) -> str:
    """The file without its metadata lines."""
    return "".join(l for l in Path(path).read_text().splitlines(keepends=True) if not l.startswith("# "))
