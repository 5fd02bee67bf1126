"""Metrics CSV output and the plot-ready comparison pivot."""

from __future__ import annotations

import csv
import io
from typing import Iterable, TextIO

from .config import Mode
from .engine import MetricsRecord

CSV_COLUMNS = ["load", "mode", "avg_e2e_delay_ms", "avg_auth_delay_ms", "delivery_ratio",
               "avg_storage_bytes", "max_storage_bytes", "packets_sent", "packets_delivered"]

# metric column -> short name used in pivoted headers, e.g. storage_secure
PIVOT_METRICS = {
    "avg_storage_bytes": "storage",
    "max_storage_bytes": "max_storage",
    "avg_e2e_delay_ms": "delay",
    "avg_auth_delay_ms": "auth_delay",
    "delivery_ratio": "delivery",
    "packets_sent": "sent",
    "packets_delivered": "delivered",
}


class ReportError(ValueError):
    pass


def fmt_load(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def format_row(r: MetricsRecord) -> list[str]:
    return [
        fmt_load(r.load), r.mode.value,
        f"{r.avg_e2e_delay_ms:.4f}", f"{r.avg_auth_delay_ms:.4f}", f"{r.delivery_ratio:.4f}",
        f"{r.avg_storage_bytes:.2f}", str(r.max_storage_bytes),
        str(r.packets_sent), str(r.packets_delivered),
    ]


def write_csv(rows: Iterable[MetricsRecord], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(format_row(r))


def csv_text(rows: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(fh: TextIO) -> list[dict[str, str]]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != CSV_COLUMNS:
        raise ReportError(f"unexpected CSV header: {reader.fieldnames}")
    return list(reader)


def pivot(tables: list[list[dict[str, str]]]) -> tuple[list[str], list[list[str]]]:
    """Merge metric tables into one row per load, one column per (metric, mode).

    Every input must cover the same load grid, and a mode may appear in only one input.
    """
    if not tables:
        raise ReportError("no input tables")
    grids = []
    cells: dict[tuple[str, str], dict[str, str]] = {}
    modes: list[str] = []
    for rows in tables:
        loads = sorted({float(r["load"]) for r in rows})
        grids.append(loads)
        for r in rows:
            m = Mode(r["mode"]).short
            if m not in modes:
                modes.append(m)
            key = (fmt_load(float(r["load"])), m)
            if key in cells:
                raise ReportError(f"duplicate row for load {key[0]} mode {m}")
            cells[key] = r
    if any(g != grids[0] for g in grids[1:]):
        raise ReportError("input tables do not share the same load grid")
    header = ["load"] + [f"{short}_{m}" for short in PIVOT_METRICS.values() for m in modes]
    body = []
    for load in grids[0]:
        lk = fmt_load(load)
        row = [lk]
        for col in PIVOT_METRICS:
            for m in modes:
                r = cells.get((lk, m))
                if r is None:
                    raise ReportError(f"mode {m} has no row for load {lk}")
                row.append(r[col])
        body.append(row)
    return header, body


def write_pivot(header: list[str], body: list[list[str]], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
