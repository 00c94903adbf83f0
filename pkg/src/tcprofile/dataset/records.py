from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ..wind_model import BASINS, StructuralParams, WindProfile

TRAIN_YEARS = range(2004, 2015)
VALID_YEARS = range(2015, 2017)
TEST_YEARS = range(2017, 2019)
AUX_DIM = 10
DAYS_PER_YEAR = 365.25


@dataclass
class SampleRecord:
    id: str
    params: StructuralParams
    profile: WindProfile
    aux: np.ndarray
    polar_image: np.ndarray | None = None  # (2, 180, 103): IR1, PMW
    cartesian_image: np.ndarray | None = None  # (2, 128, 128)

    @property
    def year(self) -> int:
        return self.params.timestamp.year


@dataclass
class DatasetSplit:
    train: list[SampleRecord] = field(default_factory=list)
    validation: list[SampleRecord] = field(default_factory=list)
    test: list[SampleRecord] = field(default_factory=list)
    other: list[SampleRecord] = field(default_factory=list)


def encode_aux(params: StructuralParams) -> np.ndarray:
    """Day-of-year (sin, cos), local solar time (sin, cos), one-hot basin."""
    if params.basin not in BASINS:
        raise ValueError(f"unknown basin {params.basin!r}")
    ts = params.timestamp
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc)
    doy = ts.timetuple().tm_yday - 1 + (ts.hour + ts.minute / 60.0 + ts.second / 3600.0) / 24.0
    day_angle = 2.0 * math.pi * doy / DAYS_PER_YEAR
    utc_hours = ts.hour + ts.minute / 60.0 + ts.second / 3600.0
    local_hours = (utc_hours + params.longitude / 15.0) % 24.0
    time_angle = 2.0 * math.pi * local_hours / 24.0
    onehot = np.zeros(len(BASINS))
    onehot[BASINS.index(params.basin)] = 1.0
    return np.concatenate(
        [[math.sin(day_angle), math.cos(day_angle), math.sin(time_angle), math.cos(time_angle)], onehot]
    )


def split_by_year(records, reject_outside: bool = False) -> DatasetSplit:
    """Train 2004-2014, validation 2015-2016, test 2017-2018.

    Records from other years land in ``other`` unless ``reject_outside`` is
    set, in which case they raise ``ValueError``.
    """
    split = DatasetSplit()
    for rec in records:
        y = rec.year
        if y in TRAIN_YEARS:
            split.train.append(rec)
        elif y in VALID_YEARS:
            split.validation.append(rec)
        elif y in TEST_YEARS:
            split.test.append(rec)
        elif reject_outside:
            raise ValueError(f"record {rec.id} from {y} is outside 2004-2018")
        else:
            split.other.append(rec)
    return split


def channel_means(records) -> np.ndarray:
    """Per-channel nan-mean of the polar images."""
    stack = np.stack([r.polar_image for r in records])
    with np.errstate(all="ignore"):
        return np.nanmean(stack, axis=(0, 2, 3))


def impute_nan(records, means: np.ndarray) -> int:
    """Replace NaN polar cells in place with ``means``; returns the count replaced."""
    n = 0
    for r in records:
        img = r.polar_image
        bad = np.isnan(img)
        if bad.any():
            n += int(bad.sum())
            r.polar_image = np.where(bad, np.asarray(means, dtype=img.dtype)[:, None, None], img)
    return n


def parse_time(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)
