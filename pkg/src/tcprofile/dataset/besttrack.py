"""Best-track CSV: ``id,timestamp,lat,lon,vmax_kt,rmw_km,r34_km,basin``.

``timestamp`` is ISO 8601 (UTC assumed when no offset is given) and
``r34_km`` may be empty.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..wind_model import StructuralParams
from .records import parse_time

log = logging.getLogger(__name__)

COLUMNS = ("id", "timestamp", "lat", "lon", "vmax_kt", "rmw_km", "r34_km", "basin")


@dataclass
class BestTrackFix:
    id: str
    params: StructuralParams


@dataclass
class ImportResult:
    fixes: list[BestTrackFix] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.fixes) + len(self.skipped)


def parse_row(row: dict) -> BestTrackFix:
    r34_text = (row.get("r34_km") or "").strip()
    params = StructuralParams(
        vmax=float(row["vmax_kt"]),
        rmw=float(row["rmw_km"]),
        latitude=float(row["lat"]),
        longitude=float(row["lon"]),
        r34=float(r34_text) if r34_text else None,
        timestamp=parse_time(row["timestamp"]),
        basin=row["basin"].strip().upper(),
    )
    fid = (row.get("id") or "").strip()
    if not fid:
        raise ValueError("empty id")
    return BestTrackFix(fid, params)


def read_best_track(path) -> ImportResult:
    """Parse ``path``; malformed rows are skipped and logged with their reason."""
    result = ImportResult()
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                result.fixes.append(parse_row(row))
            except (ValueError, TypeError, KeyError) as exc:
                log.warning("%s:%d skipped: %s", path, lineno, exc)
                result.skipped.append((lineno, str(exc)))
    return result


def write_best_track(path, fixes):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for fx in fixes:
            p = fx.params
            w.writerow(
                [
                    fx.id,
                    p.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    repr(p.latitude),
                    repr(p.longitude),
                    repr(p.vmax),
                    repr(p.rmw),
                    "" if p.r34 is None else repr(p.r34),
                    p.basin,
                ]
            )
