"""Parametric radial wind profile, its three-constraint fit, and label quality.

The profile is

    V(r) = 2 r (Rm Vmax + f Rm^2 / 2) / (Rm^2 + a r^b) - f r / 2

in knots and kilometres. For a fixed Rm, requiring V(Rm) = Vmax and
dV/dr(Rm) = 0 pins the shape parameters:

    b = 2 - f Rm / (Vmax + f Rm / 2),     a = Rm^(2 - b)

so the fit reduces to a bracketed bisection on Rm until V(R34) = 34 kt.
Vmax and R34 are never altered; only the radius of maximum wind moves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ._accel import njit, use_numba

OMEGA = 7.2921e-5  # s^-1
MS_PER_KT = 0.514444
GALE_KT = 34.0
N_PROFILE = 151
PROFILE_STEP_KM = 5.0
PROFILE_RADII_KM = PROFILE_STEP_KM * np.arange(N_PROFILE)
BASINS = ("WPAC", "EPAC", "CPAC", "ATLN", "IO", "SH")

RM_MIN_KM = 2.0
FIT_TOL_KT = 1e-3
MAX_OUTER_ITER = 200
_SCAN_POINTS = 256


class NoValidProfile(ValueError):
    """No profile label exists for this fix (weaker than gale force or missing R34)."""


class FitDiverged(RuntimeError):
    """The radius-of-maximum-wind search failed to satisfy the R34 constraint."""


@dataclass(frozen=True)
class StructuralParams:
    vmax: float
    rmw: float
    latitude: float
    r34: float | None = None
    longitude: float = 0.0
    timestamp: datetime = datetime(2010, 1, 1, tzinfo=timezone.utc)
    basin: str = "WPAC"

    def __post_init__(self):
        if not self.vmax > 0:
            raise ValueError(f"vmax must be positive, got {self.vmax}")
        if not self.rmw > 0:
            raise ValueError(f"rmw must be positive, got {self.rmw}")
        if not abs(self.latitude) <= 90:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if self.r34 is not None and not self.r34 > self.rmw:
            raise ValueError(f"r34 ({self.r34}) must exceed rmw ({self.rmw})")
        if self.basin not in BASINS:
            raise ValueError(f"unknown basin {self.basin!r}")


@dataclass(frozen=True)
class FittedWindModel:
    vmax: float
    rm: float
    a: float
    b: float
    f: float

    def __call__(self, r):
        return eval_wind(self, r)


@dataclass
class WindProfile:
    speeds: np.ndarray = field(default_factory=lambda: np.zeros(N_PROFILE))
    valid: bool = False
    quality: str = "good"
    rmw_shift_km: float = float("nan")
    model: FittedWindModel | None = None

    def __eq__(self, other):
        if not isinstance(other, WindProfile):
            return NotImplemented
        return (
            np.array_equal(self.speeds, other.speeds)
            and self.valid == other.valid
            and self.quality == other.quality
            and (self.rmw_shift_km == other.rmw_shift_km or (math.isnan(self.rmw_shift_km) and math.isnan(other.rmw_shift_km)))
            and self.model == other.model
        )


@dataclass(frozen=True)
class QualityStats:
    sigma_km: float
    threshold_km: float
    fraction_within: float


def coriolis(latitude: float) -> float:
    """|2 Omega sin(lat)| in kt/km."""
    if not abs(latitude) <= 90:
        raise ValueError(f"latitude out of range: {latitude}")
    return 2.0 * OMEGA * abs(math.sin(math.radians(latitude))) * 1000.0 / MS_PER_KT


def shape_for_rm(vmax: float, rm: float, f: float) -> tuple[float, float]:
    """(a, b) that put the profile peak, of height ``vmax``, exactly at ``rm``."""
    b = 2.0 - f * rm / (vmax + 0.5 * f * rm)
    return rm ** (2.0 - b), b


def model_for_rm(vmax: float, rm: float, f: float) -> FittedWindModel:
    a, b = shape_for_rm(vmax, rm, f)
    return FittedWindModel(vmax=float(vmax), rm=float(rm), a=float(a), b=float(b), f=float(f))


def eval_wind(model: FittedWindModel, r):
    """Wind speed (kt) at radius ``r`` (km); scalar or array. Never clamped."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    rm, f = model.rm, model.f
    num = 2.0 * r * (rm * model.vmax + 0.5 * f * rm * rm)
    out = num / (rm * rm + model.a * r**model.b) - 0.5 * f * r
    return float(out) if out.ndim == 0 else out


@njit
def _v_at(r, vmax, rm, f):
    b = 2.0 - f * rm / (vmax + 0.5 * f * rm)
    a = rm ** (2.0 - b)
    return 2.0 * r * (rm * vmax + 0.5 * f * rm * rm) / (rm * rm + a * r**b) - 0.5 * f * r


@njit
def _fit_rm_nb(vmax, r34, rm_guess, f, lo, hi, n_scan, tol, max_iter):
    # Scan for sign changes of V(r34; rm) - 34, keep the one nearest rm_guess.
    step = (hi - lo) / (n_scan - 1)
    best_lo = -1.0
    best_dist = 1e300
    prev_rm = lo
    prev_g = _v_at(r34, vmax, lo, f) - 34.0
    for k in range(1, n_scan):
        rm = lo + k * step
        g = _v_at(r34, vmax, rm, f) - 34.0
        if (prev_g <= 0.0 < g) or (prev_g >= 0.0 > g):
            mid = 0.5 * (prev_rm + rm)
            d = abs(mid - rm_guess)
            if d < best_dist:
                best_dist = d
                best_lo = prev_rm
        prev_rm = rm
        prev_g = g
    if best_lo < 0.0:
        return -1.0, 0
    a_rm = best_lo
    b_rm = min(best_lo + step, hi)
    ga = _v_at(r34, vmax, a_rm, f) - 34.0
    for it in range(max_iter):
        m = 0.5 * (a_rm + b_rm)
        gm = _v_at(r34, vmax, m, f) - 34.0
        if abs(gm) < tol or (b_rm - a_rm) < 1e-12:
            return m, it + 1
        if (gm > 0.0) == (ga > 0.0):
            a_rm = m
            ga = gm
        else:
            b_rm = m
    return -2.0, max_iter


def _fit_rm_np(vmax, r34, rm_guess, f, lo, hi, n_scan, tol, max_iter):
    def g(rm):
        a, b = shape_for_rm(vmax, rm, f)
        return 2.0 * r34 * (rm * vmax + 0.5 * f * rm * rm) / (rm * rm + a * r34**b) - 0.5 * f * r34 - GALE_KT

    grid = lo + (hi - lo) / (n_scan - 1) * np.arange(n_scan)
    b_grid = 2.0 - f * grid / (vmax + 0.5 * f * grid)
    vals = 2.0 * r34 * (grid * vmax + 0.5 * f * grid**2) / (grid**2 + grid ** (2.0 - b_grid) * r34**b_grid) - 0.5 * f * r34 - GALE_KT
    p, q = vals[:-1], vals[1:]
    crossing = ((p <= 0) & (q > 0)) | ((p >= 0) & (q < 0))
    idx = np.flatnonzero(crossing)
    if idx.size == 0:
        return -1.0, 0
    k = idx[np.argmin(np.abs(0.5 * (grid[idx] + grid[idx + 1]) - rm_guess))]
    a_rm, b_rm = float(grid[k]), float(min(grid[k] + (hi - lo) / (n_scan - 1), hi))
    ga = g(a_rm)
    for it in range(max_iter):
        m = 0.5 * (a_rm + b_rm)
        gm = g(m)
        if abs(gm) < tol or (b_rm - a_rm) < 1e-12:
            return m, it + 1
        if (gm > 0.0) == (ga > 0.0):
            a_rm, ga = m, gm
        else:
            b_rm = m
    return -2.0, max_iter


def rm_search_bounds(vmax: float, r34: float, f: float) -> tuple[float, float]:
    """Admissible Rm interval: above ``RM_MIN_KM``, inside R34, and with b > 1."""
    hi = r34 - 1.0
    if f > 0:
        # b > 1  <=>  f Rm / 2 < Vmax
        hi = min(hi, 0.999 * 2.0 * vmax / f)
    return RM_MIN_KM, hi


def fit_wind_model(p: StructuralParams, tol: float = FIT_TOL_KT, max_iter: int = MAX_OUTER_ITER) -> FittedWindModel:
    """Fit (a, b, Rm) with Vmax and R34 held fixed.

    Raises :class:`NoValidProfile` below gale force or without R34, and
    :class:`FitDiverged` when no admissible Rm reproduces R34.
    """
    if p.vmax < GALE_KT or p.r34 is None:
        raise NoValidProfile(f"no R34 profile for vmax={p.vmax} kt, r34={p.r34}")
    if p.vmax <= GALE_KT:
        raise NoValidProfile("vmax equal to the gale threshold leaves R34 degenerate")
    f = coriolis(p.latitude)
    lo, hi = rm_search_bounds(p.vmax, p.r34, f)
    if hi <= lo:
        raise FitDiverged(f"empty Rm search interval [{lo}, {hi}] for r34={p.r34}")
    kernel = _fit_rm_nb if use_numba() else _fit_rm_np
    rm, iters = kernel(float(p.vmax), float(p.r34), float(p.rmw), f, lo, hi, _SCAN_POINTS, tol, max_iter)
    if rm == -1.0:
        raise FitDiverged(f"V(r34) never reaches 34 kt for Rm in [{lo:.1f}, {hi:.1f}] km")
    if rm < 0:
        raise FitDiverged(f"bisection did not converge in {iters} iterations")
    return model_for_rm(p.vmax, rm, f)


def build_profile_label(p: StructuralParams) -> WindProfile:
    """151-point label at 0, 5, ..., 750 km, or an invalid profile below gale force."""
    try:
        model = fit_wind_model(p)
    except NoValidProfile:
        return WindProfile()
    speeds = np.maximum(eval_wind(model, PROFILE_RADII_KM), 0.0)
    return WindProfile(speeds=speeds, valid=True, quality="good", rmw_shift_km=abs(p.rmw - model.rm), model=model)


def quality_stats(shifts) -> QualityStats:
    """Population SD of RMW shifts, the 2-sigma threshold, and the share inside it."""
    s = np.asarray(list(shifts), dtype=np.float64)
    if s.size == 0:
        raise ValueError("quality_stats needs at least one shift")
    sigma = float(s.std())
    threshold = 2.0 * sigma
    # zero dispersion: every shift is identical, so none is an outlier
    within = 1.0 if sigma == 0.0 else float(np.mean(s <= threshold))
    return QualityStats(sigma_km=sigma, threshold_km=threshold, fraction_within=within)


def flag_uncertain(profiles: list[WindProfile], stats: QualityStats | None = None) -> QualityStats | None:
    """Mark valid profiles whose RMW shift exceeds the 2-sigma threshold as ``uncertain``.

    Mutates ``profiles`` in place and returns the statistics used.
    """
    valid = [p for p in profiles if p.valid]
    if not valid:
        return stats
    if stats is None:
        stats = quality_stats(p.rmw_shift_km for p in valid)
    for p in valid:
        outlier = stats.sigma_km > 0 and p.rmw_shift_km > stats.threshold_km
        p.quality = "uncertain" if outlier else "good"
    return stats


