import numpy as np
import pytest

from oracles import conv2d_loop, gradient_check, r34_bruteforce, vmax_bruteforce
from tcprofile.nn import functional as F
from tcprofile.nn.layers import BatchNorm
from tcprofile.nn.losses import DegenerateLoss, LossWeights, composite_loss
from tcprofile.nn.net import NetConfig, ProfilerNet
from tcprofile.nn.optim import Adam
from tcprofile.nn.tensor import Tensor
from tcprofile.polar_geom import PolarImage, roll_rotate


def leaf(a):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=True)


# ------------------------------------------------------------------ forward


@pytest.mark.parametrize("circular", [True, False])
@pytest.mark.parametrize("kernel,stride", [((4, 3), (2, 2)), ((3, 3), (1, 1)), ((2, 2), (2, 1))])
def test_conv2d_matches_loop(accel_path, rng, circular, kernel, stride):
    x = rng.normal(size=(2, 3, 10, 7))
    w = rng.normal(size=(4, 3, *kernel))
    b = rng.normal(size=4)
    out = F.conv2d(x, w, b, stride, circular).data
    ref = conv2d_loop(x, w, b, stride, circular)
    assert out.shape == ref.shape
    assert np.abs(out - ref).max() < 1e-5


def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 6, 5))
    out = F.conv2d(x, np.ones((1, 1, 1, 1)), None, (1, 1)).data
    np.testing.assert_array_equal(out, x)


def test_conv2d_channel_mismatch():
    with pytest.raises(ValueError):
        F.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((3, 1, 2, 2)))


def test_net_spatial_chain_and_shape():
    cfg = NetConfig()
    assert cfg.spatial_chain() == [(180, 103), (90, 52), (45, 26), (23, 13), (12, 7), (6, 4), (3, 2)]
    net = ProfilerNet(cfg, seed=0)
    assert net.num_parameters() == 2_914_667
    out = net(np.zeros((2, 2, 180, 103)), np.zeros((2, 10)))
    assert out.shape == (2, 151)
    with pytest.raises(ValueError):
        net(np.zeros((2, 2, 128, 128)), np.zeros((2, 10)))


def test_net_forward_is_deterministic(rng):
    x = rng.normal(size=(3, 2, 180, 103))
    a = rng.normal(size=(3, 10))
    o1 = ProfilerNet(seed=4)(x, a).data
    o2 = ProfilerNet(seed=4)(x, a).data
    np.testing.assert_array_equal(o1, o2)


def test_relu_and_linear(rng):
    np.testing.assert_array_equal(F.relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])
    x, w, b = rng.normal(size=(4, 8)), rng.normal(size=(8, 5)), rng.normal(size=5)
    assert np.abs(F.linear(x, w, b).data - (x @ w + b)).max() < 1e-6


def test_batchnorm_identity_on_standardised_batch(rng):
    x = rng.normal(size=(64, 3))
    x = (x - x.mean(0)) / x.std(0)
    out = F.batch_norm(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), training=True).data
    np.testing.assert_allclose(out, x, atol=1e-4)


def test_batchnorm_rejects_single_sample():
    with pytest.raises(ValueError):
        F.batch_norm(np.ones((1, 3)), np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), training=True)
    # inference mode is fine
    F.batch_norm(np.ones((1, 3)), np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), training=False)


def test_batchnorm_running_stats(rng):
    x = rng.normal(3.0, 2.0, size=(50, 2))
    rm, rv = np.zeros(2), np.ones(2)
    F.batch_norm(x, np.ones(2), np.zeros(2), rm, rv, training=True, momentum=0.1)
    np.testing.assert_allclose(rm, 0.1 * x.mean(0))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(0, ddof=1))


def test_batchnorm_layer_warm_start(rng):
    bn = BatchNorm(2, dtype=np.float64)
    batches = [rng.normal(3.0, 2.0, size=(20, 2)) for _ in range(3)]
    for x in batches:
        bn(x)
    # first batches are averaged exactly, so the init values leave no trace
    np.testing.assert_allclose(bn.running_mean, np.mean([x.mean(0) for x in batches], axis=0))
    np.testing.assert_allclose(bn.running_var, np.mean([x.var(0, ddof=1) for x in batches], axis=0))
    assert bn.n_updates[0] == 3
    bn.reset_running_stats()
    np.testing.assert_array_equal(bn.running_mean, 0.0)
    np.testing.assert_array_equal(bn.running_var, 1.0)


# ------------------------------------------------------------- gradients


def test_grad_conv2d(rng):
    x, w, b = leaf(rng.normal(size=(2, 2, 8, 5))), leaf(rng.normal(size=(3, 2, 4, 3))), leaf(rng.normal(size=3))
    r = rng.normal(size=(2, 3, 4, 3))
    fails = gradient_check(lambda: F.sum_(F.mul(F.conv2d(x, w, b, (2, 2)), r)), {"x": x, "w": w, "b": b}, 100, rng)
    assert not fails


def test_grad_batchnorm(rng):
    x, g, b = leaf(rng.normal(size=(5, 3, 2, 2))), leaf(rng.normal(size=3)), leaf(rng.normal(size=3))
    r = rng.normal(size=(5, 3, 2, 2))

    def loss():
        return F.sum_(F.mul(F.batch_norm(x, g, b, np.zeros(3), np.ones(3), True), r))

    assert not gradient_check(loss, {"x": x, "gamma": g, "beta": b}, 100, rng)


def test_grad_linear_relu_sigmoid(rng):
    x, w, b = leaf(rng.normal(size=(4, 6))), leaf(rng.normal(size=(6, 5))), leaf(rng.normal(size=5))

    def loss():
        h = F.relu(F.linear(x, w, b))
        return F.sum_(F.sigmoid(F.concat([h, x], axis=1)))

    assert not gradient_check(loss, {"x": x, "w": w, "b": b}, 100, rng)


def test_grad_infer_vmax_and_soft_r34(rng):
    p = leaf(rng.normal(34, 10, size=(3, 151)))
    assert not gradient_check(lambda: F.sum_(F.square(F.infer_vmax(p))), {"p": p}, 100, rng)
    r = rng.normal(size=3)
    assert not gradient_check(lambda: F.sum_(F.mul(F.soft_r34(p, 1.0), r)), {"p": p}, 100, rng)


def test_grad_composite_loss(rng):
    pred = leaf(rng.normal(34, 10, size=(4, 151)))
    prof = rng.normal(34, 10, size=(4, 151))
    pmask = np.array([1, 0, 1, 1], bool)
    vmax = rng.uniform(20, 100, 4)
    r34 = rng.uniform(50, 300, 4)
    rmask = np.array([1, 1, 0, 1], bool)
    w = LossWeights(alpha=0.3, beta=0.01)

    def loss():
        return composite_loss(pred, prof, pmask, vmax, r34, rmask, w)[0]

    assert not gradient_check(loss, {"pred": pred}, 100, rng)


def test_grad_small_net_end_to_end(rng):
    cfg = NetConfig(input_hw=(12, 7), conv_dims=(2, 3), hidden_dims=(5,), aux_dim=2, out_dim=151, dtype="float64")
    net = ProfilerNet(cfg, seed=1)
    x = rng.normal(size=(4, 2, 12, 7))
    a = rng.normal(size=(4, 2))
    prof = rng.normal(30, 5, size=(4, 151))
    vmax = prof.max(1)

    def loss():
        return composite_loss(net(x, a), prof, np.ones(4, bool), vmax, np.zeros(4), np.zeros(4, bool))[0]

    assert not gradient_check(loss, net.parameters(), 150, rng, atol=1e-6)


def test_backward_accumulates_shared_parents():
    x = leaf([1.0, 2.0, 3.0])
    F.sum_(F.mul(x, x) + x).backward()
    np.testing.assert_allclose(x.grad, [3.0, 5.0, 7.0])


def test_adam_reduces_quadratic():
    w = leaf([5.0, -3.0])
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        F.sum_(F.square(w)).backward()
        opt.step()
    assert np.abs(w.data).max() < 0.05


# ------------------------------------------------------------ roll symmetry


def test_conv_commutes_with_roll(rng):
    img = PolarImage(rng.normal(size=(2, 180, 103)))
    x = img.data[None]
    w = rng.normal(size=(3, 2, 4, 3))
    base1 = F.conv2d(x, w, None, (1, 1)).data
    base2 = F.conv2d(x, w, None, (2, 2)).data
    for k in (1, 5, 37):
        rolled = roll_rotate(img, 2 * k).data[None]
        np.testing.assert_allclose(F.conv2d(rolled, w, None, (1, 1)).data, np.roll(base1, k, axis=2), atol=1e-6)
    for k in (2, 18, 90):
        rolled = roll_rotate(img, 2 * k).data[None]
        np.testing.assert_allclose(F.conv2d(rolled, w, None, (2, 2)).data, np.roll(base2, k // 2, axis=2), atol=1e-6)


# ------------------------------------------------------ profile transforms


def test_infer_vmax_examples(rng):
    assert F.infer_vmax(np.full(151, 50.0)).item() == 50
    p = np.zeros(151)
    p[7] = 80
    assert F.infer_vmax(p).item() == 80
    for _ in range(200):
        q = rng.normal(30, 20, 151)
        assert F.infer_vmax(q).item() == vmax_bruteforce(q)


def test_infer_vmax_tie_routes_to_lowest_index():
    p = leaf(np.r_[np.zeros(3), 5.0, 1.0, 5.0, np.zeros(145)])
    F.infer_vmax(p).backward()
    assert p.grad[3] == 1 and p.grad.sum() == 1


def test_infer_r34_examples(rng):
    assert F.infer_r34(np.full(151, 20.0)) == 0
    p = np.where(np.arange(151) <= 40, 50.0, 10.0)
    assert F.infer_r34(p) == 200
    q = np.zeros(151)
    q[10:21] = 40
    q[55:61] = 40
    assert F.infer_r34(q) == 300
    batch = rng.normal(30, 15, size=(100, 151))
    np.testing.assert_array_equal(F.infer_r34(batch), [r34_bruteforce(row) for row in batch])


def test_soft_r34_examples():
    assert F.soft_r34(np.full(151, 0.0)).item() == pytest.approx(0, abs=1e-10)
    p = np.where(np.arange(151) <= 40, 60.0 - 0.5 * np.arange(151), 10.0)
    assert F.soft_r34(p, tau=0.01).item() == pytest.approx(205, abs=1e-6)
    with pytest.raises(ValueError):
        F.soft_r34(p, tau=0)


# ------------------------------------------------------------------- losses


def test_composite_loss_hand_example():
    pred = Tensor(np.full((1, 151), 40.0))
    loss, parts = composite_loss(pred, np.full((1, 151), 30.0), [True], [30.0], [np.nan], [False])
    assert parts["profile"] == pytest.approx(100)
    assert parts["vmax"] == pytest.approx(100)
    assert loss.item() == pytest.approx(130)


def test_composite_loss_zero_when_exact(rng):
    prof = rng.uniform(0, 100, size=(3, 151))
    loss, _ = composite_loss(Tensor(prof), prof, [1, 1, 1], prof.max(1), F.infer_r34(prof), [0, 0, 0])
    assert loss.item() == 0


def test_composite_loss_masked_profiles_only_use_other_terms():
    pred = Tensor(np.full((2, 151), 40.0))
    loss, parts = composite_loss(pred, np.full((2, 151), np.nan), [False, False], [30.0, 50.0], [0, 0], [False, False])
    assert "profile" not in parts
    assert loss.item() == pytest.approx(0.3 * 100)


def test_composite_loss_degenerate():
    pred = Tensor(np.zeros((2, 151)))
    with pytest.raises(DegenerateLoss):
        composite_loss(pred, np.zeros((2, 151)), [0, 0], [0, 0], [0, 0], [0, 0], LossWeights(alpha=0, beta=0))
