import csv
import io
import math

import numpy as np
import pytest

from tcprofile.dataset.synth import SynthConfig, synth_dataset
from tcprofile.nn import functional as F
from tcprofile.nn.checkpoint import load_checkpoint
from tcprofile.nn.net import NetConfig, ProfilerNet
from tcprofile.train_eval import (
    SWEEP_COLUMNS,
    Batch,
    TrainConfig,
    baseline_report,
    blend_predict,
    format_sweep_csv,
    metrics,
    parse_sweep_csv,
    recalibrate_batchnorm,
    roll_shifts,
    run_sweep,
    sweep_grid,
    to_batch,
    train,
)


@pytest.fixture(scope="module")
def small_set():
    recs = synth_dataset(30, seed=11, cfg=SynthConfig(keep_cartesian=True))
    return recs[:22], recs[22:]


class LinearProbe:
    """Rotation-sensitive stand-in model: fixed random projection of the image."""

    def __init__(self, seed=0, n_in=2 * 180 * 4):
        self.w = np.random.default_rng(seed).normal(size=(n_in, 151)) / 100

    def predict(self, images, aux):
        return images[:, :, :, :4].reshape(len(images), -1) @ self.w + 40.0


def _fake_batch(rng, n=6):
    prof = rng.uniform(0, 90, size=(n, 151))
    return Batch(
        images=rng.normal(size=(n, 2, 180, 4)).astype(np.float32),
        aux=np.zeros((n, 10), np.float32),
        profiles=prof,
        profile_mask=np.ones(n, bool),
        vmax=prof.max(1),
        r34=F.infer_r34(prof).astype(float),
        r34_mask=np.ones(n, bool),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(blend=7)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(coordinate="spherical")
    assert TrainConfig.from_dict(TrainConfig(kernel=(2, 2)).to_dict()) == TrainConfig(kernel=(2, 2))


def test_roll_shifts():
    np.testing.assert_array_equal(roll_shifts(10), np.arange(10) * 18)


def test_blend_invariant_to_36_degree_rolls(rng):
    imgs = rng.normal(size=(5, 2, 180, 4))
    model = LinearProbe()
    base = blend_predict(model, imgs, np.zeros((5, 10)))
    for k in range(1, 10):
        rolled = np.roll(imgs, 18 * k, axis=2)
        np.testing.assert_array_equal(blend_predict(model, rolled, np.zeros((5, 10))), base)
    med = blend_predict(model, imgs, np.zeros((5, 10)), stat="median")
    np.testing.assert_array_equal(blend_predict(model, np.roll(imgs, 54, axis=2), np.zeros((5, 10)), stat="median"), med)


def test_blend_of_constant_model(rng):
    const = rng.uniform(0, 80, 151)

    def model(images, aux):
        return np.tile(const, (len(images), 1))

    out = blend_predict(model, rng.normal(size=(3, 2, 180, 5)), np.zeros((3, 10)))
    np.testing.assert_allclose(out, np.tile(const, (3, 1)), rtol=0, atol=1e-12)


def test_blend_reduces_vmax_variance(rng):
    model = LinearProbe(seed=3)
    imgs = rng.normal(size=(4, 2, 180, 4))
    aux = np.zeros((4, 10))
    shifts = rng.integers(0, 180, size=50)
    single = np.array([F.infer_vmax(model.predict(np.roll(imgs, s, axis=2), aux)).data for s in shifts])
    blended = np.array([F.infer_vmax(blend_predict(model, np.roll(imgs, s, axis=2), aux)).data for s in shifts])
    assert (blended.var(axis=0) <= single.var(axis=0)).all()


def test_metrics_perfect_prediction(rng):
    b = _fake_batch(rng)
    rep = metrics(b.profiles.copy(), b)
    assert rep.profile_rmse == 0 and rep.vmax_rmse == 0 and rep.r34_rmse == 0


def test_metrics_ignore_masked_samples(rng):
    b = _fake_batch(rng)
    b.profile_mask[[1, 4]] = False
    b.r34_mask[[0, 4]] = False
    pred = b.profiles.copy()
    # corrupt only what the masks hide: sub-gale winds keep max and R34 intact
    for k in (1, 4):
        pred[k] = np.where(pred[k] < 34, 0.5 * pred[k], pred[k])
    b.r34[[0, 4]] = 999.0
    rep = metrics(pred, b)
    assert rep.profile_rmse == 0 and rep.r34_rmse == 0 and rep.vmax_rmse == 0
    assert rep.n_profile == 4 and rep.n_r34 == 4 and rep.n_vmax == 6


def test_metrics_counts_errors(rng):
    b = _fake_batch(rng)
    pred = b.profiles + 3.0
    rep = metrics(pred, b)
    assert rep.profile_rmse == pytest.approx(3.0)
    assert rep.vmax_rmse == pytest.approx(3.0)


def test_baseline_rmse_is_label_spread(small_set):
    tr = to_batch(small_set[0])
    labels = tr.profiles[tr.profile_mask]
    rep = baseline_report(tr, tr)
    assert rep.profile_rmse == pytest.approx(math.sqrt(labels.var(axis=0).mean()), rel=1e-12)


def test_train_is_deterministic_and_checkpointed(small_set, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=8, seed=5, blend=2)
    r1 = train(cfg, *small_set, checkpoint_dir=tmp_path)
    r2 = train(cfg, *small_set)
    assert r1.report == r2.report
    for k, v in r1.best_state.items():
        np.testing.assert_array_equal(v, r2.best_state[k])
    assert {p.name for p in tmp_path.iterdir()} == {"epoch_001", "epoch_002", "best"}
    curve = [c["profile_rmse"] for c in r1.report.curve]
    assert r1.report.selected_epoch == 1 + int(np.argmin(curve))
    net, extra = load_checkpoint(tmp_path / "best")
    assert extra["epoch"] == r1.report.selected_epoch
    b = to_batch(small_set[1])
    np.testing.assert_array_equal(net.predict(b.images, b.aux), r1.net.predict(b.images, b.aux))


def test_train_cartesian_mode(small_set):
    res = train(TrainConfig(epochs=1, batch_size=8, coordinate="cartesian"), *small_set)
    assert res.net.config.input_hw == (128, 128) and not res.net.config.circular
    assert math.isfinite(res.report.profile_rmse)


def test_train_rejects_empty_sets(small_set):
    with pytest.raises(ValueError):
        train(TrainConfig(epochs=1), small_set[0], [])


def test_sweep_rows_and_csv_round_trip(small_set):
    base = TrainConfig(epochs=1, batch_size=8, blend=2)
    grid = sweep_grid(kernels=((2, 2), (4, 3)), loss_weights=((0.0, 0.0), (0.3, 0.0)), base=base)
    assert len(grid) == 4
    rows = run_sweep(grid, *small_set)
    assert [(r["(angle, radial)"], r["α"]) for r in rows] == [("(2, 2)", 0.0), ("(2, 2)", 0.3), ("(4, 3)", 0.0), ("(4, 3)", 0.3)]
    assert {r["Loss"] for r in rows} == {"Profile", "Profile+V_max"}
    text = format_sweep_csv(rows)
    assert next(csv.reader(io.StringIO(text))) == list(SWEEP_COLUMNS)
    assert parse_sweep_csv(text) == rows
    with pytest.raises(ValueError):
        parse_sweep_csv("a,b\n1,2\n")


def test_recalibrate_batchnorm_matches_batch_statistics(small_set):
    b = to_batch(small_set[0])
    net = ProfilerNet(NetConfig(), seed=0)
    recalibrate_batchnorm(net, b.images, b.aux, batch_size=len(b))
    assert not net.bn_in.training
    mean = b.images.astype(np.float64).mean(axis=(0, 2, 3))
    np.testing.assert_allclose(net.bn_in.running_mean, mean, rtol=1e-4)
    n = b.images.shape[0] * b.images.shape[2] * b.images.shape[3]
    var = b.images.astype(np.float64).var(axis=(0, 2, 3)) * n / (n - 1)
    np.testing.assert_allclose(net.bn_in.running_var, var, rtol=1e-3)
    # eval-mode normalisation of the same batch is now centred and unit-scaled
    z = net.bn_in(b.images).data.astype(np.float64)
    np.testing.assert_allclose(z.mean(axis=(0, 2, 3)), 0.0, atol=1e-3)
    np.testing.assert_allclose(z.std(axis=(0, 2, 3)), 1.0, rtol=1e-3)
