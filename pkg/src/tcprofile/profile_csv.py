"""Profile tables: ``id,p0..p150,vmax_kt,r34_km`` and long-form overlays."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .nn.functional import infer_r34, infer_vmax


def profile_columns(n: int = 151) -> list[str]:
    return ["id", *(f"p{i}" for i in range(n)), "vmax_kt", "r34_km"]


def write_profiles(path, ids, profiles: np.ndarray):
    """Write profiles with Vmax and R34 derived from each row."""
    profiles = np.asarray(profiles, dtype=np.float64)
    vmax = infer_vmax(profiles).data if len(profiles) else np.zeros(0)
    r34 = infer_r34(profiles) if len(profiles) else np.zeros(0)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(profile_columns(profiles.shape[1] if profiles.ndim == 2 else 151))
        for k, fid in enumerate(ids):
            w.writerow([fid, *(f"{v:.4f}" for v in profiles[k]), f"{vmax[k]:.4f}", f"{r34[k]:.1f}"])


def read_profiles(path) -> dict[str, np.ndarray]:
    """id -> profile array, in file order."""
    out: dict[str, np.ndarray] = {}
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ValueError(f"{path}: not a profile table")
        pcols = [k for k, h in enumerate(header) if h.startswith("p") and h[1:].isdigit()]
        for row in reader:
            if not row:
                continue
            out[row[0]] = np.array([float(row[k]) for k in pcols])
    return out


def read_overlay(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``id,radius_km,wind_kt`` rows grouped per id, sorted by radius."""
    groups: dict[str, list[tuple[float, float]]] = {}
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"id", "radius_km", "wind_kt"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: overlay needs columns {sorted(need)}")
        for row in reader:
            groups.setdefault(row["id"], []).append((float(row["radius_km"]), float(row["wind_kt"])))
    out = {}
    for fid, pts in groups.items():
        pts.sort()
        arr = np.array(pts)
        out[fid] = (arr[:, 0], arr[:, 1])
    return out
