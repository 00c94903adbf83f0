"""Storm-centred Cartesian rasters to (azimuth, radius) grids.

Polar grid: angle index ``i`` is azimuth ``2*i`` degrees, radius index ``j`` is
``5*j`` km. Azimuth is measured from the +x (column) axis towards +y (row).
Rotating a storm on this grid is a circular roll of the angle axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import bilinear_grid

N_ANGLES = 180
N_RADII = 103
DEG_PER_ANGLE = 2
KM_PER_RADIUS = 5.0
DEFAULT_PIXEL_KM = 8.05


@dataclass(frozen=True)
class CartesianImage:
    """Channel-major (C, H, W) raster with the storm at ((H-1)/2, (W-1)/2)."""

    data: np.ndarray
    pixel_spacing_km: float = DEFAULT_PIXEL_KM

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"expected (C, H, W) data, got shape {self.data.shape}")
        if self.data.shape[1] != self.data.shape[2]:
            raise ValueError("Cartesian image must be square")
        if self.data.shape[1] < 2:
            raise ValueError("Cartesian image needs at least 2x2 pixels")
        if not self.pixel_spacing_km > 0:
            raise ValueError("pixel_spacing_km must be positive")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> int:
        return self.data.shape[1]

    @property
    def center(self) -> tuple[float, float]:
        return ((self.data.shape[1] - 1) / 2.0, (self.data.shape[2] - 1) / 2.0)


@dataclass(frozen=True)
class PolarImage:
    """(C, angle, radius) grid."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"expected (C, angle, radius) data, got shape {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_angles(self) -> int:
        return self.data.shape[1]

    @property
    def n_radii(self) -> int:
        return self.data.shape[2]


def sample_bilinear(img: CartesianImage, x: float, y: float) -> np.ndarray:
    """Bilinear value of every channel at column ``x``, row ``y``.

    Exact at integer coordinates. Raises ``ValueError`` outside the pixel hull.
    """
    n = img.size
    if not (0.0 <= x <= n - 1 and 0.0 <= y <= n - 1):
        raise ValueError(f"coordinate ({x}, {y}) outside [0, {n - 1}]")
    xs = np.array([[float(x)]])
    ys = np.array([[float(y)]])
    fill = np.zeros(img.channels)
    return bilinear_grid(img.data, xs, ys, np.ones((1, 1), dtype=bool), fill)[:, 0, 0]


@lru_cache(maxsize=16)
def polar_sample_points(size: int, pixel_spacing_km: float, n_angles: int = N_ANGLES, n_radii: int = N_RADII):
    """Pixel coordinates (xs, ys) of every polar cell and the in-bounds mask."""
    c = (size - 1) / 2.0
    theta = np.deg2rad(DEG_PER_ANGLE * np.arange(n_angles))[:, None]
    r_px = (KM_PER_RADIUS * np.arange(n_radii) / pixel_spacing_km)[None, :]
    xs = c + r_px * np.cos(theta)
    ys = c + r_px * np.sin(theta)
    inside = (xs >= 0) & (xs <= size - 1) & (ys >= 0) & (ys <= size - 1)
    for a in (xs, ys, inside):
        a.setflags(write=False)
    return xs, ys, inside


def cart_to_polar(img: CartesianImage, n_angles: int = N_ANGLES, n_radii: int = N_RADII) -> PolarImage:
    """Resample ``img`` onto the polar grid.

    Samples falling outside the raster take the channel mean (NaN pixels
    ignored for the mean). NaN pixels still propagate into the cells that
    touch them.
    """
    xs, ys, inside = polar_sample_points(img.size, float(img.pixel_spacing_km), n_angles, n_radii)
    with np.errstate(all="ignore"):
        flat = img.data.reshape(img.channels, -1)
        fill = np.array([np.nanmean(ch) if np.isfinite(ch).any() else np.nan for ch in flat])
    return PolarImage(bilinear_grid(img.data, xs, ys, inside, fill))


def roll_rotate(img: PolarImage, degrees: int) -> PolarImage:
    """Rotate by ``degrees`` (a multiple of 2) via a circular roll of the angle axis."""
    if int(degrees) != degrees or int(degrees) % DEG_PER_ANGLE:
        raise ValueError(f"rotation must be a multiple of {DEG_PER_ANGLE} degrees, got {degrees}")
    shift = (int(degrees) // DEG_PER_ANGLE) % img.n_angles
    return PolarImage(np.roll(img.data, shift, axis=1))
