"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each case runs once per path to warm up (JIT compile), then reports the best
of ``--repeat`` timings. Results are printed as a small table.
"""
import argparse
import time

import numpy as np

from tcprofile import _accel, kernels
from tcprofile.dataset.synth import synth_dataset
from tcprofile.nn.losses import composite_loss
from tcprofile.nn.net import ProfilerNet
from tcprofile.polar_geom import CartesianImage, cart_to_polar
from tcprofile.train_eval import to_batch
from tcprofile.wind_model import StructuralParams, fit_wind_model


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 16, 90, 52)).astype(np.float32)
    cols, _ = kernels.im2col(x, (4, 3), (2, 2), True)
    img = CartesianImage(rng.normal(size=(2, 128, 128)), 8.05)
    params = [
        StructuralParams(vmax=v, rmw=r, latitude=lat, r34=r + e)
        for v, r, lat, e in zip(rng.uniform(35, 160, 200), rng.uniform(10, 80, 200), rng.uniform(-35, 35, 200), rng.uniform(40, 300, 200))
    ]
    batch = to_batch(synth_dataset(32, seed=1))
    net = ProfilerNet(seed=0)

    def fit_all():
        for p in params:
            fit_wind_model(p)

    def train_step():
        pred = net(batch.images, batch.aux)
        loss, _ = composite_loss(pred, batch.profiles, batch.profile_mask, batch.vmax, batch.r34, batch.r34_mask)
        loss.backward()

    return [
        ("im2col 32x16x90x52, k(4,3) s2", lambda: kernels.im2col(x, (4, 3), (2, 2), True)),
        ("col2im (same shape)", lambda: kernels.col2im(cols, x.shape, (4, 3), (2, 2), True)),
        ("cart_to_polar 2x128x128", lambda: cart_to_polar(img)),
        ("fit_wind_model x200", fit_all),
        ("train step, batch 32", train_step),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.NUMBA_OK:
        raise SystemExit("numba is not installed")
    rows = []
    for name, fn in cases():
        timing = {}
        for path, disabled in (("numba", False), ("numpy", True)):
            _accel._DISABLED = disabled
            timing[path] = best_of(fn, args.repeat)
        rows.append((name, timing["numba"], timing["numpy"]))
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numba ms':>10}  {'numpy ms':>10}  {'speedup':>8}")
    for name, nb, np_ in rows:
        print(f"{name:<{width}}  {1e3 * nb:10.2f}  {1e3 * np_:10.2f}  {np_ / nb:7.2f}x")


if __name__ == "__main__":
    main()
