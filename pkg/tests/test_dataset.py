import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest

from tcprofile.dataset import besttrack
from tcprofile.dataset.archive import load_archive, save_archive
from tcprofile.dataset.container import (
    MANIFEST,
    ArchiveError,
    ChecksumError,
    TruncatedFileError,
    VersionMismatchError,
    read_container,
    write_container,
)
from tcprofile.dataset.records import channel_means, encode_aux, impute_nan, split_by_year
from tcprofile.dataset.synth import SynthConfig, synth_dataset, synth_storm
from tcprofile.wind_model import N_PROFILE, StructuralParams

UTC = timezone.utc


def params_at(ts, basin="WPAC", lon=0.0):
    return StructuralParams(vmax=30, rmw=40, latitude=15, longitude=lon, timestamp=ts, basin=basin)


# --------------------------------------------------------------------- aux


def test_aux_examples():
    a = encode_aux(params_at(datetime(2010, 1, 1, tzinfo=UTC)))
    assert a.shape == (10,)
    np.testing.assert_array_equal(a[4:], [1, 0, 0, 0, 0, 0])
    assert a[0] == pytest.approx(0, abs=1e-12) and a[1] == pytest.approx(1)
    # local solar time at lon 0, 00 UTC is midnight
    assert a[2] == pytest.approx(0, abs=1e-12) and a[3] == pytest.approx(1)
    b = encode_aux(params_at(datetime(2010, 7, 2, tzinfo=UTC), basin="SH"))
    assert abs(b[0]) < 0.02 and abs(b[1] + 1) < 0.02
    assert b[4:].tolist() == [0, 0, 0, 0, 0, 1]


def test_aux_local_time_follows_longitude():
    a = encode_aux(params_at(datetime(2010, 3, 1, 0, tzinfo=UTC), lon=90.0))
    # 00 UTC at 90E is 06 local: quarter turn
    assert a[2] == pytest.approx(1) and a[3] == pytest.approx(0, abs=1e-12)


def test_aux_on_unit_circles(rng):
    for _ in range(50):
        ts = datetime(2004 + int(rng.integers(15)), 1 + int(rng.integers(12)), 1 + int(rng.integers(28)), int(rng.integers(24)), tzinfo=UTC)
        a = encode_aux(params_at(ts, lon=float(rng.uniform(-180, 180))))
        assert a[0] ** 2 + a[1] ** 2 == pytest.approx(1)
        assert a[2] ** 2 + a[3] ** 2 == pytest.approx(1)
        assert a[4:].sum() == 1


# ------------------------------------------------------------------ splits


def test_split_boundaries():
    recs = [synth_storm(k, SynthConfig(keep_cartesian=False)) for k in range(3)]
    for r, ts in zip(recs, ("2014-12-31T23:00", "2015-01-01T00:00", "2017-06-01T00:00")):
        r.params = StructuralParams(**{**r.params.__dict__, "timestamp": datetime.fromisoformat(ts).replace(tzinfo=UTC)})
    split = split_by_year(recs)
    assert [r.id for r in split.train] == [recs[0].id]
    assert [r.id for r in split.validation] == [recs[1].id]
    assert [r.id for r in split.test] == [recs[2].id]


def test_split_outside_years():
    r = synth_storm(5, SynthConfig(keep_cartesian=False))
    r.params = StructuralParams(**{**r.params.__dict__, "timestamp": datetime(2020, 1, 1, tzinfo=UTC)})
    assert split_by_year([r]).other == [r]
    with pytest.raises(ValueError):
        split_by_year([r], reject_outside=True)


# --------------------------------------------------------------- synthetic


def test_synth_is_deterministic():
    a, b = synth_storm(17), synth_storm(17)
    assert a.id == b.id and a.params == b.params and a.profile == b.profile
    np.testing.assert_array_equal(a.polar_image, b.polar_image)
    np.testing.assert_array_equal(a.cartesian_image, b.cartesian_image)
    assert synth_storm(18).params != a.params


@pytest.mark.slow
def test_synth_invariants_over_many_seeds():
    cfg = SynthConfig(keep_cartesian=False)
    recs = synth_dataset(1000, seed=3, cfg=cfg)
    valid = 0
    for r in recs:
        p, prof = r.params, r.profile
        assert 20 <= p.vmax <= 160 and 10 <= p.rmw <= 80
        assert r.polar_image.shape == (2, 180, 103) and np.isfinite(r.polar_image).all()
        assert r.aux.shape == (10,)
        if p.vmax < 34:
            assert not prof.valid and p.r34 is None
        else:
            assert prof.valid and p.r34 > p.rmw
            assert prof.speeds.shape == (N_PROFILE,) and (prof.speeds >= 0).all()
            # the 5 km grid can straddle a sharp peak, so only bound from above
            assert prof.speeds.max() <= p.vmax + 1e-9
        valid += prof.valid
    assert abs(valid / 1000 - 0.46) <= 0.02


def test_synth_channels_track_wind():
    r = next(rec for rec in map(synth_storm, range(20)) if rec.profile.valid)
    ir, pmw = r.polar_image.mean(axis=1)
    # IR colder and PMW warmer near the wind maximum than far out
    j = int(round(r.profile.model.rm / 5))
    assert ir[j] < ir[-1] and pmw[j] > pmw[-1]


# ----------------------------------------------------------------- archive


def _records(n=3, cart=True):
    return synth_dataset(n, seed=7, cfg=SynthConfig(keep_cartesian=cart))


def _assert_same(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.id == y.id and x.params == y.params and x.profile == y.profile
        np.testing.assert_array_equal(x.aux, y.aux)
        np.testing.assert_array_equal(x.polar_image, y.polar_image)
        if x.cartesian_image is None:
            assert y.cartesian_image is None
        else:
            np.testing.assert_array_equal(x.cartesian_image, y.cartesian_image)


def test_archive_round_trip(tmp_path):
    recs = _records()
    save_archive(recs, tmp_path / "a")
    _assert_same(recs, load_archive(tmp_path / "a"))


def test_archive_empty(tmp_path):
    save_archive([], tmp_path / "e")
    assert load_archive(tmp_path / "e") == []


def test_archive_save_load_save_is_byte_identical(tmp_path):
    save_archive(_records(cart=False), tmp_path / "a")
    save_archive(load_archive(tmp_path / "a"), tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _blob(path):
    return next(p for p in path.iterdir() if p.name != MANIFEST)


def test_archive_corrupt_magic(tmp_path):
    save_archive(_records(1, cart=False), tmp_path / "a")
    blob = _blob(tmp_path / "a")
    data = bytearray(blob.read_bytes())
    data[0] ^= 0xFF
    blob.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_archive(tmp_path / "a")


def test_archive_flipped_payload_bit(tmp_path):
    save_archive(_records(1, cart=False), tmp_path / "a")
    blob = _blob(tmp_path / "a")
    data = bytearray(blob.read_bytes())
    data[-1] ^= 0x01
    blob.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_archive(tmp_path / "a")


def test_archive_truncated(tmp_path):
    save_archive(_records(1, cart=False), tmp_path / "a")
    blob = _blob(tmp_path / "a")
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(TruncatedFileError):
        load_archive(tmp_path / "a")


def test_archive_version_mismatch(tmp_path):
    save_archive([], tmp_path / "a")
    mf = tmp_path / "a" / MANIFEST
    doc = json.loads(mf.read_text())
    doc["schema_version"] = 99
    mf.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatchError):
        load_archive(tmp_path / "a")


def test_archive_missing_and_wrong_kind(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_archive(tmp_path / "nothing")
    write_container(tmp_path / "c", "other-kind", {}, {"x": np.zeros(3)})
    with pytest.raises(ArchiveError):
        load_archive(tmp_path / "c")
    meta, arrays = read_container(tmp_path / "c")
    np.testing.assert_array_equal(arrays["x"], np.zeros(3))


def test_container_preserves_float_bits(tmp_path):
    vals = np.array([np.pi, -0.0, 1e-310, np.inf, -np.inf, np.nextafter(1.0, 2.0)])
    write_container(tmp_path / "c", "k", {"note": "x"}, {"v": vals, "f": vals.astype(np.float32)})
    _, arrays = read_container(tmp_path / "c", "k")
    assert arrays["v"].tobytes() == vals.tobytes()
    assert arrays["f"].tobytes() == vals.astype(np.float32).tobytes()


def test_impute_nan():
    recs = _records(2, cart=False)
    recs[0].polar_image = recs[0].polar_image.copy()
    recs[0].polar_image[0, 3, 4] = np.nan
    means = channel_means(recs)
    assert np.isfinite(means).all()
    assert impute_nan(recs, means) == 1
    assert recs[0].polar_image[0, 3, 4] == np.float32(means[0])


# -------------------------------------------------------------- best track


def test_best_track_round_trip_and_skips(tmp_path, caplog):
    fixes = [
        besttrack.BestTrackFix("A", StructuralParams(vmax=90, rmw=30, latitude=20, longitude=130, r34=210, timestamp=datetime(2012, 8, 1, 6, tzinfo=UTC))),
        besttrack.BestTrackFix("B", StructuralParams(vmax=25, rmw=50, latitude=-12, longitude=60, timestamp=datetime(2016, 2, 3, tzinfo=UTC), basin="SH")),
    ]
    path = tmp_path / "bt.csv"
    besttrack.write_best_track(path, fixes)
    with open(path, "a") as fh:
        fh.write("C,2012-01-01T00:00Z,oops,0,50,20,,WPAC\n")
        fh.write("D,2012-01-01T00:00Z,10,0,50,20,,NOWHERE\n")
    res = besttrack.read_best_track(path)
    assert [f.id for f in res.fixes] == ["A", "B"]
    assert [f.params for f in res.fixes] == [f.params for f in fixes]
    assert [line for line, _ in res.skipped] == [4, 5]
    assert res.n_rows == 4
    assert "skipped" in caplog.text


def test_best_track_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,lat\nA,1\n")
    with pytest.raises(ValueError):
        besttrack.read_best_track(path)
