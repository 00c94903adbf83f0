"""Sample archives on disk (see :mod:`tcprofile.dataset.container` for the layout)."""
from __future__ import annotations

import math
from datetime import datetime

import numpy as np

from ..wind_model import N_PROFILE, FittedWindModel, StructuralParams, WindProfile
from .container import ArchiveError, read_container, write_container
from .records import AUX_DIM, SampleRecord

KIND = "tcprofile-archive"
IMAGE_FIELDS = ("polar_image", "cartesian_image")


def _opt(x: float | None):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def _record_meta(r: SampleRecord) -> dict:
    p, prof = r.params, r.profile
    m = prof.model
    return {
        "id": r.id,
        "vmax": float(p.vmax),
        "rmw": float(p.rmw),
        "r34": _opt(p.r34),
        "latitude": float(p.latitude),
        "longitude": float(p.longitude),
        "timestamp": p.timestamp.isoformat(),
        "basin": p.basin,
        "profile_valid": bool(prof.valid),
        "quality": prof.quality,
        "rmw_shift_km": _opt(prof.rmw_shift_km),
        "model": None if m is None else {"vmax": m.vmax, "rm": m.rm, "a": m.a, "b": m.b, "f": m.f},
    }


def save_archive(records, path, extra_meta: dict | None = None):
    """Write ``records`` to directory ``path``.

    Images are stored as float32; profile labels and auxiliary features keep
    float64. An image field is written only if every record carries it.
    """
    records = list(records)
    arrays = {
        "profile": np.array([r.profile.speeds for r in records], dtype=np.float64).reshape(len(records), N_PROFILE),
        "aux": np.array([r.aux for r in records], dtype=np.float64).reshape(len(records), AUX_DIM),
    }
    for name in IMAGE_FIELDS:
        imgs = [getattr(r, name) for r in records]
        present = [im is not None for im in imgs]
        if records and all(present):
            arrays[name] = np.stack(imgs).astype(np.float32)
        elif any(present):
            raise ValueError(f"{name} is present on some records but not others")
    meta = {"records": [_record_meta(r) for r in records], "extra": extra_meta or {}}
    return write_container(path, KIND, meta, arrays)


def load_archive(path) -> list[SampleRecord]:
    meta, arrays = read_container(path, KIND)
    rows = meta["records"]
    n = len(rows)
    for name, arr in arrays.items():
        if arr.shape[0] != n:
            raise ArchiveError(f"blob {name} has {arr.shape[0]} rows for {n} records")
    out = []
    for k, m in enumerate(rows):
        params = StructuralParams(
            vmax=m["vmax"],
            rmw=m["rmw"],
            latitude=m["latitude"],
            r34=m["r34"],
            longitude=m["longitude"],
            timestamp=datetime.fromisoformat(m["timestamp"]),
            basin=m["basin"],
        )
        model = None if m["model"] is None else FittedWindModel(**m["model"])
        profile = WindProfile(
            speeds=arrays["profile"][k].copy(),
            valid=m["profile_valid"],
            quality=m["quality"],
            rmw_shift_km=float("nan") if m["rmw_shift_km"] is None else m["rmw_shift_km"],
            model=model,
        )
        rec = SampleRecord(id=m["id"], params=params, profile=profile, aux=arrays["aux"][k].copy())
        for name in IMAGE_FIELDS:
            if name in arrays:
                setattr(rec, name, arrays[name][k].copy())
        out.append(rec)
    return out


def archive_meta(path) -> dict:
    meta, _ = read_container(path, KIND)
    return meta.get("extra", {})
