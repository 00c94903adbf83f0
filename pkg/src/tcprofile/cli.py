"""``tcprofile`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    ArchiveError,
    SampleRecord,
    SynthConfig,
    load_archive,
    read_best_track,
    save_archive,
    split_by_year,
    synth_dataset,
    write_best_track,
)
from .dataset.besttrack import BestTrackFix
from .dataset.records import channel_means, encode_aux, impute_nan
from .nn.checkpoint import load_checkpoint
from .nn.losses import DegenerateLoss
from .profile_csv import read_overlay, read_profiles, write_profiles
from .svgplot import profile_chart
from .train_eval import (
    TrainConfig,
    TrainingDiverged,
    format_sweep_csv,
    predict_profiles,
    run_sweep,
    sweep_grid,
    to_batch,
    train,
    metrics,
)
from .wind_model import PROFILE_RADII_KM, FitDiverged, WindProfile, build_profile_label, flag_uncertain

log = logging.getLogger("tcprofile")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MAX_SKIP_FRACTION = 0.10


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ config


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _kernel(text: str) -> tuple[int, int]:
    try:
        a, r = (int(t) for t in str(text).strip("() ").split(","))
    except ValueError:
        raise UsageError(f"kernel must look like A,R (got {text!r})") from None
    return a, r


_TRAIN_KEYS = {
    "alpha": float,
    "beta": float,
    "tau": float,
    "kernel": _kernel,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "lr": float,
    "blend": int,
    "blend_stat": str,
    "coordinate": str,
}


def train_config_from(args) -> TrainConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            if k not in _TRAIN_KEYS:
                raise UsageError(f"unknown config key {k!r}")
            values[k] = _TRAIN_KEYS[k](v)
    for k, conv in _TRAIN_KEYS.items():
        v = getattr(args, k, None)
        if v is not None:
            values[k] = conv(v) if k == "kernel" else v
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def write_run_manifest(target: Path, command: str, config: dict):
    target = Path(target)
    path = target / "run_manifest.json" if target.is_dir() else target.with_name(target.name + ".manifest.json")
    body = {
        "command": command,
        "config": config,
        "tcprofile_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path.write_text(json.dumps(body, indent=1, sort_keys=True, default=str) + "\n")


def _load(path) -> list[SampleRecord]:
    p = Path(path)
    if not (p / "manifest.json").is_file():
        raise DataError(f"archive not found: {p}")
    return load_archive(p)


def _load_ckpt(path):
    p = Path(path)
    if (p / "best" / "manifest.json").is_file():
        p = p / "best"
    if not (p / "manifest.json").is_file():
        raise DataError(f"checkpoint not found: {p}")
    return load_checkpoint(p)


def _with_images(records, coordinate="polar"):
    attr = "polar_image" if coordinate == "polar" else "cartesian_image"
    if not records or any(getattr(r, attr) is None for r in records):
        raise DataError(f"archive records lack {attr}")
    return records


# ---------------------------------------------------------------- commands


def cmd_build_labels(args) -> int:
    src = Path(args.csv)
    if not src.is_file():
        raise DataError(f"best-track CSV not found: {src}")
    result = read_best_track(src)
    if result.n_rows == 0:
        raise DataError(f"{src}: no fixes")
    records, diverged = [], 0
    for fx in result.fixes:
        try:
            profile = build_profile_label(fx.params)
        except FitDiverged as exc:
            log.warning("%s: fit diverged: %s", fx.id, exc)
            diverged += 1
            profile = WindProfile()
        records.append(SampleRecord(id=fx.id, params=fx.params, profile=profile, aux=encode_aux(fx.params)))
    stats = flag_uncertain([r.profile for r in records])
    n_valid = sum(r.profile.valid for r in records)
    report = {
        "rows": result.n_rows,
        "skipped": len(result.skipped),
        "fit_diverged": diverged,
        "valid_profiles": n_valid,
        "valid_fraction": n_valid / max(len(records), 1),
        "rmw_shift_sigma_km": None if stats is None else stats.sigma_km,
        "uncertain_threshold_km": None if stats is None else stats.threshold_km,
        "fraction_within_threshold": None if stats is None else stats.fraction_within,
    }
    out = Path(args.out)
    save_archive(records, out, extra_meta={"quality": report})
    if args.labels_csv:
        write_profiles(args.labels_csv, [r.id for r in records], np.array([r.profile.speeds for r in records]).reshape(-1, 151))
    (out / "quality.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"{n_valid} of {len(records)} fixes ({100 * report['valid_fraction']:.0f}%) carry a valid profile")
    if stats is not None:
        print(
            f"RMW shift 2-sigma threshold {stats.threshold_km:.1f} km; "
            f"{100 * stats.fraction_within:.1f}% of profiles within it"
        )
    write_run_manifest(out, "build-labels", {"csv": str(src)})
    if len(result.skipped) > MAX_SKIP_FRACTION * result.n_rows:
        print(f"error: {len(result.skipped)} of {result.n_rows} rows skipped", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig(valid_rate=args.valid_rate, keep_cartesian=not args.no_cartesian)
    records = synth_dataset(args.n, seed=args.seed, cfg=cfg)
    # Synthetic channels have no gaps, but the archive contract is NaN-free.
    if records:
        impute_nan(records, channel_means(records))
    save_archive(records, args.out, extra_meta={"synth_config": cfg.to_dict(), "seed": args.seed})
    if args.csv:
        write_best_track(args.csv, [BestTrackFix(r.id, r.params) for r in records])
    n_valid = sum(r.profile.valid for r in records)
    print(f"wrote {len(records)} synthetic records ({n_valid} with profiles) to {args.out}")
    write_run_manifest(Path(args.out), "synth", {"n": args.n, "seed": args.seed, "synth_config": cfg.to_dict()})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = train_config_from(args)
    split = split_by_year(_with_images(_load(args.archive), cfg.coordinate))
    if not split.train or not split.validation:
        raise DataError("archive needs records in both the 2004-2014 and 2015-2016 year ranges")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg, split.train, split.validation, checkpoint_dir=out)
    rep = result.report
    (out / "report.json").write_text(json.dumps(rep.__dict__, indent=1, sort_keys=True) + "\n")
    print(
        f"selected epoch {rep.selected_epoch}: profile RMSE {rep.profile_rmse:.3f} kt, "
        f"Vmax RMSE {rep.vmax_rmse:.3f} kt, R34 RMSE {rep.r34_rmse:.2f} km"
    )
    write_run_manifest(out, "train", cfg.to_dict())
    return EXIT_OK


def _select(records, which):
    if which == "all":
        return records
    split = split_by_year(records)
    return {"train": split.train, "validation": split.validation, "test": split.test}[which]


def cmd_eval(args) -> int:
    net, extra = _load_ckpt(args.checkpoint)
    cfg = TrainConfig.from_dict(extra.get("train_config", {}))
    if args.blend is not None:
        cfg = replace(cfg, blend=args.blend)
    records = _select(_with_images(_load(args.archive), cfg.coordinate), args.split)
    if not records:
        raise DataError(f"no records in split {args.split!r}")
    batch = to_batch(records, cfg.coordinate)
    rep = metrics(predict_profiles(net, batch, cfg), batch)
    body = {k: getattr(rep, k) for k in ("profile_rmse", "vmax_rmse", "r34_rmse", "n_profile", "n_vmax", "n_r34")}
    text = json.dumps(body, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        write_run_manifest(Path(args.out), "eval", {"split": args.split, **cfg.to_dict()})
    print(text)
    return EXIT_OK


def _pairs(text: str, conv) -> list:
    return [conv(part) for part in text.split(";") if part.strip()]


def cmd_sweep(args) -> int:
    base = train_config_from(args)
    kernels = _pairs(args.kernels, _kernel) if args.kernels else [base.kernel]
    losses = _pairs(args.losses, lambda s: tuple(float(t) for t in s.split(","))) if args.losses else [(base.alpha, base.beta)]
    if any(len(l) != 2 for l in losses):
        raise UsageError("--losses expects 'alpha,beta;alpha,beta;...'")
    coords = ["polar"] + (["cartesian"] if args.cartesian else [])
    records = _load(args.archive)
    configs = sweep_grid(kernels, losses, coords, base)
    for c in coords:
        _with_images(records, c)
    split = split_by_year(records)
    if not split.train or not split.validation:
        raise DataError("archive needs records in both the 2004-2014 and 2015-2016 year ranges")
    rows = run_sweep(configs, split.train, split.validation)
    text = format_sweep_csv(rows)
    Path(args.out).write_text(text)
    print(text, end="")
    write_run_manifest(Path(args.out), "sweep", {"configs": [c.to_dict() for c in configs]})
    return EXIT_OK


def cmd_predict(args) -> int:
    net, extra = _load_ckpt(args.checkpoint)
    cfg = TrainConfig.from_dict(extra.get("train_config", {}))
    if args.blend is not None:
        cfg = replace(cfg, blend=args.blend)
    records = _select(_with_images(_load(args.archive), cfg.coordinate), args.split)
    batch = to_batch(records, cfg.coordinate)
    pred = predict_profiles(net, batch, cfg)
    write_profiles(args.out, [r.id for r in records], pred)
    write_run_manifest(Path(args.out), "predict", {"split": args.split, **cfg.to_dict()})
    print(f"wrote {len(records)} predicted profiles to {args.out}")
    return EXIT_OK


def cmd_labels(args) -> int:
    records = _select(_load(args.archive), args.split)
    write_profiles(args.out, [r.id for r in records], np.array([r.profile.speeds for r in records]).reshape(-1, 151))
    return EXIT_OK


def cmd_plot(args) -> int:
    label_path = Path(args.label)
    if not label_path.is_file():
        raise DataError(f"label CSV not found: {label_path}")
    labels = read_profiles(label_path)
    preds = []
    for p in args.pred or []:
        if not Path(p).is_file():
            raise DataError(f"prediction CSV not found: {p}")
        preds.append((Path(p).stem, read_profiles(p)))
    overlay = read_overlay(args.overlay) if args.overlay else {}
    overlay_name = Path(args.overlay).stem if args.overlay else ""
    ids = args.ids.split(",") if args.ids else list(labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid in ids:
        if fid not in labels:
            raise DataError(f"id {fid!r} missing from {label_path}")
        series = [(label_path.stem, PROFILE_RADII_KM[: len(labels[fid])], labels[fid])]
        for name, table in preds:
            if fid not in table:
                raise DataError(f"id {fid!r} missing from prediction {name}")
            if len(table[fid]) != len(labels[fid]):
                raise UsageError(f"{name}: {len(table[fid])} profile points for {fid}, label has {len(labels[fid])}")
            series.append((name, PROFILE_RADII_KM[: len(table[fid])], table[fid]))
        ov = (overlay_name, *overlay[fid]) if fid in overlay else None
        (out / f"{fid}.svg").write_text(profile_chart(fid, series, ov))
    write_run_manifest(out, "plot", {"label": str(label_path), "pred": args.pred, "overlay": args.overlay})
    print(f"wrote {len(ids)} chart(s) to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _train_flags(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--kernel", help="angle,radius kernel shape, e.g. 4,3")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--blend", type=int)
    p.add_argument("--blend-stat", dest="blend_stat", choices=("mean", "median"))
    p.add_argument("--coordinate", choices=("polar", "cartesian"))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tcprofile", description="Tropical-cyclone wind-profile labels and polar CNN profiler.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-labels", help="fit profile labels for a best-track CSV")
    p.add_argument("csv")
    p.add_argument("--out", required=True, help="output archive directory")
    p.add_argument("--labels-csv", help="also write the label profiles as CSV")
    p.set_defaults(func=cmd_build_labels)

    p = sub.add_parser("synth", help="generate a synthetic archive")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--valid-rate", type=float, default=0.46)
    p.add_argument("--no-cartesian", action="store_true", help="omit the 128x128 Cartesian rasters")
    p.add_argument("--csv", help="also write the fixes as a best-track CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a profiler on an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a checkpoint"), ("predict", cmd_predict, "write predicted profiles")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--archive", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", choices=("train", "validation", "test", "all"), default="test" if name == "eval" else "all")
        p.add_argument("--blend", type=int)
        p.add_argument("--out", required=name == "predict")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="kernel-shape / loss-weight sweep")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True, help="CSV report")
    p.add_argument("--kernels", help="e.g. '2,2;4,3'")
    p.add_argument("--losses", help="alpha,beta pairs, e.g. '0,0;0,0.1;0.3,0;0.3,0.1'")
    p.add_argument("--cartesian", action="store_true", help="also run the Cartesian-grid ablation")
    _train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("labels", help="export archive label profiles as CSV")
    p.add_argument("--archive", required=True)
    p.add_argument("--split", choices=("train", "validation", "test", "all"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("plot", help="SVG profile charts")
    p.add_argument("--label", required=True, help="label profile CSV")
    p.add_argument("--pred", action="append", help="prediction CSV (repeatable)")
    p.add_argument("--overlay", help="id,radius_km,wind_kt CSV, e.g. scatterometer winds")
    p.add_argument("--ids", help="comma-separated ids (default: all)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FitDiverged, FloatingPointError, DegenerateLoss) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ArchiveError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
