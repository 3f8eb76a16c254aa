"""Command-line entry point: prepare, train, translate, evaluate, study-serve.

Every source of randomness is surfaced as an explicit ``--seed`` flag, so
all commands are deterministic under fixed flags. The data root can also be
set through the ``MRTRANSLATE_DATA_ROOT`` environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import data as core_data
from .errors import ConfigError, MrTranslateError
from .metrics import evaluate_model
from .networks import generate, normalize_direction
from .study import Composition, SessionStore, build_pool
from .training import TrainConfig, load_checkpoint, parse_train_config, train

DATA_ROOT_ENV = "MRTRANSLATE_DATA_ROOT"


def _root_or_env(value: str | None) -> Path:
    root = value or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ConfigError(f"no data root given; pass --root or set {DATA_ROOT_ENV}")
    return Path(root)


def cmd_prepare(args) -> int:
    root = _root_or_env(args.root)
    subjects = sorted(core_data.list_subjects(root))
    if not 0 < args.n_train < len(subjects):
        raise ConfigError(
            f"n_train must be in (0, {len(subjects)}) for {len(subjects)} paired subjects, "
            f"got {args.n_train}"
        )
    train_subjects, test_subjects = core_data.split_subjects(subjects, args.n_train, args.seed)
    out = Path(args.out) if args.out else root / "split_manifest.json"
    core_data.write_split_manifest(
        out,
        seed=args.seed,
        train_subjects=train_subjects,
        test_subjects=test_subjects,
        slice_index=args.slice_index,
        root=str(root),
    )
    print(f"wrote {out}: {len(train_subjects)} train / {len(test_subjects)} test subjects")
    return 0


def _load_split(args, split: str) -> core_data.PairedDataset:
    manifest = core_data.read_split_manifest(args.manifest)
    root = _root_or_env(args.root or manifest.get("root"))
    return core_data.load_paired_dataset(
        root,
        slice_index=manifest.get("slice_index"),
        subjects=manifest[f"{split}_subjects"],
        split=split,
    )


def cmd_train(args) -> int:
    config = parse_train_config(args.config)
    if args.kind is not None:
        config = TrainConfig(**{**config.to_dict(), "kind": args.kind, "loss_weights": None})
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    dataset = _load_split(args, "train")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(record):
        parts = ", ".join(f"{k}={v:.4f}" for k, v in record.losses.items())
        print(f"epoch {record.epoch}/{config.epochs}: {parts} ({record.wall_seconds:.1f}s)")

    train(config, dataset, out_dir=out_dir, resume_from=args.resume, progress=progress)
    print(f"run complete; checkpoints and history.csv in {out_dir}")
    return 0


def cmd_translate(args) -> int:
    direction = normalize_direction(args.direction)
    checkpoint = load_checkpoint(args.checkpoint)
    bundle = checkpoint.bundle
    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        raise ConfigError(f"no such input directory: {input_dir}")
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    supported = core_data.VOLUME_EXTENSIONS + core_data.IMAGE_EXTENSIONS
    files = sorted(p for p in input_dir.iterdir() if p.name.lower().endswith(supported))
    if not files:
        print(f"warning: no supported image files in {input_dir}; nothing to do")
        return 0

    skipped: list[tuple[Path, str]] = []
    written = 0
    source_domain = "T1" if direction == "a2b" else "T2"
    for path in files:
        stem = path.name
        for ext in supported:
            if stem.lower().endswith(ext):
                stem = stem[: -len(ext)]
                break
        try:
            volume = core_data.load_volume(path)
            image = core_data.extract_slice(
                volume, args.slice_index, domain=source_domain, subject_id=stem
            )
            normalized = core_data.zscore_normalize(image)
            synthetic = generate(bundle, normalized, direction)
        except MrTranslateError as exc:
            skipped.append((path, str(exc)))
            continue
        core_data.write_grayscale_png(output_dir / f"{stem}_syn.png", synthetic.pixels)
        written += 1

    for path, reason in skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    print(f"translated {written}/{len(files)} images into {output_dir}")
    return 1 if skipped else 0


def _prediction_translator(pred_dir: Path, image_shape=None):
    """Translator reading precomputed synthetic images from <pred_dir>/{T1,T2}/."""

    def translate(source, direction):
        target = "T2" if normalize_direction(direction) == "a2b" else "T1"
        for name in (f"{source.subject_id}.png", f"{source.subject_id}_syn.png"):
            path = pred_dir / target / name
            if path.exists():
                volume = core_data.load_volume(path)
                return volume.data[:, :, 0]
        raise ConfigError(
            f"no prediction for subject {source.subject_id!r} in {pred_dir / target}"
        )

    return translate


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.pred_dir):
        raise ConfigError("pass exactly one of --checkpoint or --pred-dir")
    dataset = _load_split(args, "test")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps_dir = out_dir / "error_maps"
    maps_dir.mkdir(exist_ok=True)

    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).bundle
    else:
        model = _prediction_translator(Path(args.pred_dir))

    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import cm
    from PIL import Image

    def sink(subject_id, direction, error_map):
        base = maps_dir / f"{subject_id}_{direction}"
        core_data.write_grayscale_png(f"{base}.png", error_map.values)
        # colormapped preview, clipped to relative error 1.0 like a fixed colorbar
        clipped = np.clip(error_map.values, 0.0, 1.0)
        rgba = (cm.viridis(clipped) * 255).astype(np.uint8)
        Image.fromarray(rgba).save(f"{base}_preview.png")

    report = evaluate_model(
        model, dataset, bins=args.bins, mi_unit=args.mi_unit, error_map_sink=sink
    )
    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    for domain, metrics_by_name in report.aggregate.items():
        parts = ", ".join(
            f"{name} {stats['mean']:.4f}±{stats['std']:.4f} (n={stats['n']})"
            for name, stats in metrics_by_name.items()
        )
        print(f"target {domain}: {parts}")
    if report.n_failures:
        print(f"{report.n_failures} per-image metric failures recorded", file=sys.stderr)
        return 1
    return 0


def _parse_synthetic_spec(specs: list[str]) -> dict[str, Path]:
    out = {}
    for spec_item in specs:
        if "=" not in spec_item:
            raise ConfigError(f"--synthetic expects KIND=DIR, got {spec_item!r}")
        kind, _, path = spec_item.partition("=")
        out[kind.strip().lower()] = Path(path)
    return out


def cmd_study_serve(args) -> int:
    from .server import StudyService, create_app

    real_pool = build_pool(args.real_dir)
    synthetic_pool = []
    for kind, path in _parse_synthetic_spec(args.synthetic or []).items():
        synthetic_pool.extend(build_pool(path, source_model=kind))
    service = StudyService(
        real_pool,
        synthetic_pool,
        SessionStore(args.store),
        default_composition=Composition(n_real=args.n_real, n_synthetic=args.n_synthetic),
        default_seed=args.seed,
    )
    service.validate_pools()
    app = create_app(service, ui_dir=args.ui_dir)

    import uvicorn

    print(f"serving perceptual study on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrtranslate",
        description="T1/T2 MR contrast translation: data prep, training, evaluation, and the perceptual study service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="scan a dataset directory and write a train/test split manifest")
    p.add_argument("--root", help=f"dataset root with T1/ and T2/ (default: ${DATA_ROOT_ENV})")
    p.add_argument("--out", help="manifest path (default: <root>/split_manifest.json)")
    p.add_argument("--slice-index", type=int, default=120)
    p.add_argument("--n-train", type=int, default=900)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model variant from a config file")
    p.add_argument("--config", required=True, help="flat key=value training config")
    p.add_argument("--root", help=f"dataset root (default: manifest root or ${DATA_ROOT_ENV})")
    p.add_argument("--manifest", required=True, help="split manifest from 'prepare'")
    p.add_argument("--out", required=True, help="run directory for checkpoints and history.csv")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument(
        "--kind",
        choices=["cyclegan", "cyclegan_s", "unit", "generators_s", "simple"],
        help="override the config kind (loss weights reset to the kind's defaults)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate a directory of images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument(
        "--direction", required=True, choices=["t1_to_t2", "t2_to_t1"], help="translation direction"
    )
    p.add_argument("--output-dir", required=True)
    p.add_argument("--slice-index", type=int, default=None)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="compute MAE/PSNR/MI and error maps over the test split")
    p.add_argument("--checkpoint", help="model checkpoint to evaluate")
    p.add_argument("--pred-dir", help="directory of precomputed predictions ({T1,T2}/<subject>.png)")
    p.add_argument("--root", help=f"dataset root (default: manifest root or ${DATA_ROOT_ENV})")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for reports and error maps")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--mi-unit", choices=["nats", "bits"], default="nats")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("study-serve", help="serve the blinded perceptual study over HTTP")
    p.add_argument("--real-dir", required=True, help="directory of real images ({T1,T2}/*.png)")
    p.add_argument(
        "--synthetic",
        action="append",
        metavar="KIND=DIR",
        help="synthetic image directory tagged with its model kind (repeatable)",
    )
    p.add_argument("--store", default="study_sessions", help="session persistence directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--n-real", type=int, default=96)
    p.add_argument("--n-synthetic", type=int, default=72)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ui-dir", help="static frontend directory to serve at /")
    p.set_defaults(func=cmd_study_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MrTranslateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
