"""Synthetic storms with known structure.

Each seed yields one :class:`SampleRecord`. The wind field is the parametric
profile itself (the fitted one when R34 exists), rendered onto a 128x128
Cartesian raster as two proxy channels and then reprojected to polar:

    IR1 = ir_warm_k - ir_gain * w            (brightness temperature, K)
    PMW = pmw_gain * max(w - pmw_onset_kt, 0) (rain rate, mm/h)

with ``w = V(d) * (1 + spiral)`` the local wind modulated by a logarithmic
spiral band pattern, plus Gaussian noise on each channel.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from ..polar_geom import DEFAULT_PIXEL_KM, CartesianImage, cart_to_polar
from ..wind_model import (
    BASINS,
    FitDiverged,
    StructuralParams,
    WindProfile,
    build_profile_label,
    coriolis,
    eval_wind,
    model_for_rm,
)
from .records import SampleRecord, encode_aux

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# (lat_min, lat_max, lon_min, lon_max); SH latitudes are negated on draw.
BASIN_BOXES = {
    "WPAC": (8.0, 35.0, 120.0, 180.0),
    "EPAC": (8.0, 30.0, -140.0, -90.0),
    "CPAC": (8.0, 30.0, -180.0, -140.0),
    "ATLN": (10.0, 40.0, -90.0, -20.0),
    "IO": (5.0, 25.0, 50.0, 100.0),
    "SH": (8.0, 30.0, 40.0, 180.0),
}


@dataclass(frozen=True)
class SynthConfig:
    valid_rate: float = 0.46
    weak_vmax: tuple[float, float] = (20.0, 33.9)
    strong_vmax: tuple[float, float] = (35.0, 160.0)
    rmw_km: tuple[float, float] = (10.0, 80.0)
    r34_extent_km: tuple[float, float] = (40.0, 300.0)
    years: tuple[int, int] = (2004, 2018)
    image_size: int = 128
    pixel_spacing_km: float = DEFAULT_PIXEL_KM
    ir_warm_k: float = 300.0
    ir_gain: float = 0.8
    pmw_gain: float = 0.2
    pmw_onset_kt: float = 20.0
    spiral_amp: float = 0.25
    spiral_arms: int = 2
    spiral_pitch: float = 2.0
    ir_noise_k: float = 2.0
    pmw_noise: float = 0.5
    keep_cartesian: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def is_strong(seed: int, valid_rate: float) -> bool:
    """Golden-ratio stratification: over any run of seeds the strong share tracks ``valid_rate``."""
    return ((seed + 1) * _GOLDEN) % 1.0 < valid_rate


def draw_params(seed: int, cfg: SynthConfig = SynthConfig()) -> tuple[StructuralParams, np.random.Generator]:
    rng = np.random.default_rng([seed, 0x7C5A])
    basin = BASINS[int(rng.integers(len(BASINS)))]
    lat0, lat1, lon0, lon1 = BASIN_BOXES[basin]
    lat = float(rng.uniform(lat0, lat1)) * (-1.0 if basin == "SH" else 1.0)
    lon = float(rng.uniform(lon0, lon1))
    year = int(rng.integers(cfg.years[0], cfg.years[1] + 1))
    start = datetime(year, 1, 1, tzinfo=timezone.utc)
    n_days = (datetime(year + 1, 1, 1, tzinfo=timezone.utc) - start).days
    ts = start + timedelta(days=int(rng.integers(n_days)), hours=3 * int(rng.integers(8)))
    rmw = float(rng.uniform(*cfg.rmw_km))
    if is_strong(seed, cfg.valid_rate):
        vmax = float(rng.uniform(*cfg.strong_vmax))
        r34 = None
        for _ in range(50):
            cand = rmw + float(rng.uniform(*cfg.r34_extent_km))
            trial = StructuralParams(vmax=vmax, rmw=rmw, latitude=lat, r34=cand, longitude=lon, timestamp=ts, basin=basin)
            try:
                build_profile_label(trial)
            except FitDiverged:
                continue
            r34 = cand
            break
        if r34 is None:
            raise FitDiverged(f"seed {seed}: no admissible R34 found")
    else:
        vmax = float(rng.uniform(*cfg.weak_vmax))
        r34 = None
    p = StructuralParams(vmax=vmax, rmw=rmw, latitude=lat, r34=r34, longitude=lon, timestamp=ts, basin=basin)
    return p, rng


def render_cartesian(model, rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    n = cfg.image_size
    c = (n - 1) / 2.0
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    dx, dy = xx - c, yy - c
    d_km = np.hypot(dx, dy) * cfg.pixel_spacing_km
    phi = np.arctan2(dy, dx)
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    spiral = cfg.spiral_amp * np.cos(cfg.spiral_arms * phi - cfg.spiral_pitch * np.log1p(d_km / 50.0) + phase)
    wind = np.maximum(eval_wind(model, d_km), 0.0) * (1.0 + spiral)
    ir = cfg.ir_warm_k - cfg.ir_gain * wind + rng.normal(0.0, cfg.ir_noise_k, size=wind.shape)
    pmw = cfg.pmw_gain * np.maximum(wind - cfg.pmw_onset_kt, 0.0) + rng.normal(0.0, cfg.pmw_noise, size=wind.shape)
    return np.stack([ir, pmw]).astype(np.float32)


def synth_storm(seed: int, cfg: SynthConfig = SynthConfig()) -> SampleRecord:
    """Deterministic synthetic record for ``seed``."""
    params, rng = draw_params(seed, cfg)
    profile = build_profile_label(params)
    if profile.valid:
        model = profile.model
    else:
        model = model_for_rm(params.vmax, params.rmw, coriolis(params.latitude))
        profile = WindProfile()
    cart = render_cartesian(model, rng, cfg)
    polar = cart_to_polar(CartesianImage(cart, cfg.pixel_spacing_km)).data.astype(np.float32)
    return SampleRecord(
        id=f"SYN{seed:06d}",
        params=params,
        profile=profile,
        aux=encode_aux(params),
        polar_image=polar,
        cartesian_image=cart if cfg.keep_cartesian else None,
    )


def synth_dataset(n: int, seed: int = 0, cfg: SynthConfig = SynthConfig()) -> list[SampleRecord]:
    """``n`` records from consecutive seeds starting at ``seed * 100003``."""
    base = seed * 100003
    return [synth_storm(base + k, cfg) for k in range(n)]
