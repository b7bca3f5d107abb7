"""Command-line surface: enroll, detect, stats, build-transform, eval,
export-embeddings.

Logs go to stderr, data to files/stdout. Exit codes: 0 ok, 2 usage,
3 io/format, 4 backend, 5 no-detection. Defaults may come from a JSON
config file (--config or the TDID_CONFIG environment variable); explicit
flags override file values, unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import adapter as adapter_mod
from . import evalharness as eh
from .augment import load_image
from .backend import (
    ExternalFilesBackend,
    MockBackend,
    MockWorldConfig,
    read_embedding_file,
)
from .enrollment import (
    EnrollmentConfig,
    PrototypeStore,
    enroll_image,
    fixed_clock,
    load_store,
    save_store,
)
from .errors import (
    BackendFailure,
    NoDetection,
    TdidError,
)
from .inference import InferenceConfig, classify_query, result_record

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO_FORMAT = 3
EXIT_BACKEND = 4
EXIT_NO_DETECTION = 5

CONFIG_ENV_VAR = "TDID_CONFIG"
DEFAULT_SEED = 0


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config_file(argv: List[str]) -> dict:
    path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "external-files"], default="mock")
    parser.add_argument("--backend-dir", help="export directory for external-files")
    parser.add_argument("--dim", type=int, default=32, help="embedding dimension")
    parser.add_argument("--model-size", choices=["s", "m", "l"], default="m")
    parser.add_argument("--mock-classes", type=int, default=8)
    parser.add_argument("--mock-sigma", type=float, default=0.0)
    parser.add_argument("--mock-image-size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="seed for all randomness (fixed default, never wall clock)")


def _make_backend(args):
    if args.backend == "mock":
        cfg = MockWorldConfig(
            num_classes=args.mock_classes,
            dim=args.dim,
            noise_sigma=args.mock_sigma,
            seed=args.seed,
            image_size=args.mock_image_size,
        )
        return MockBackend(cfg, model_size=args.model_size)
    if not args.backend_dir:
        raise ValueError("--backend-dir is required with --backend external-files")
    return ExternalFilesBackend(args.backend_dir, dim=args.dim,
                                model_size=args.model_size)


def build_parser(config: Optional[dict] = None) -> argparse.ArgumentParser:
    config = config or {}
    parser = argparse.ArgumentParser(
        prog="tdid",
        description="Few-shot target-driven instance detection toolkit",
    )
    parser.add_argument("--config", help="JSON config file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p_enroll = sub.add_parser("enroll", help="enroll object example images into a store")
    p_enroll.add_argument("--store", required=True)
    p_enroll.add_argument("--label", required=True)
    p_enroll.add_argument("images", nargs="+")
    p_enroll.add_argument("--margin", type=float, default=15.0)
    aug = p_enroll.add_mutually_exclusive_group()
    aug.add_argument("--augment", dest="augment", action="store_true", default=True)
    aug.add_argument("--no-augment", dest="augment", action="store_false")
    p_enroll.add_argument("--prompt", default="main object")
    p_enroll.add_argument("--nms-iou", type=float, default=0.5)
    p_enroll.add_argument("--min-confidence", type=float, default=0.05)
    p_enroll.add_argument("--adapter", help="whitening-coloring transform JSON")
    p_enroll.add_argument("--full-image-fallback", action="store_true")
    p_enroll.add_argument("--fixed-clock", action="store_true",
                          help="constant timestamps for byte-identical stores")
    _add_backend_flags(p_enroll)

    p_detect = sub.add_parser("detect", help="classify query images against a store")
    p_detect.add_argument("--store", required=True)
    p_detect.add_argument("images", nargs="+")
    p_detect.add_argument("--min-confidence", type=float, default=0.05)
    p_detect.add_argument("--nms-iou", type=float, default=0.5)
    p_detect.add_argument("--output", help="write JSON records here instead of stdout")
    _add_backend_flags(p_detect)

    p_stats = sub.add_parser("stats", help="estimate domain statistics from an EMB1 file")
    p_stats.add_argument("--input", required=True, help="EMB1 embedding corpus")
    p_stats.add_argument("--output", required=True, help="stats JSON path")

    p_bt = sub.add_parser("build-transform",
                          help="build the whitening-coloring transform from stats")
    p_bt.add_argument("--image-stats", required=True)
    p_bt.add_argument("--text-stats", required=True)
    p_bt.add_argument("--epsilon", type=float, default=adapter_mod.DEFAULT_EPSILON)
    p_bt.add_argument("--output", required=True)

    p_eval = sub.add_parser("eval", help="run the episodic evaluation grid")
    p_eval.add_argument("--manifest", help="dataset manifest JSON (mock default if absent)")
    p_eval.add_argument("--image-root", help="root directory for manifest paths")
    p_eval.add_argument("--classes", default="2,4,9,19")
    p_eval.add_argument("--shots", default="1,3,5,10")
    p_eval.add_argument("--repeats", type=int, default=30)
    p_eval.add_argument("--sizes", default="s,m,l")
    p_eval.add_argument("--aug-modes", default="0,1",
                        help="comma list of 0/1 augmentation modes to cross")
    p_eval.add_argument("--adapter-modes", default="0",
                        help="comma list of 0/1 adapter modes to cross")
    p_eval.add_argument("--transform",
                        help="adapter transform JSON (external backend only)")
    p_eval.add_argument("--margin", type=float, default=15.0)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--bins", type=int, default=20)
    p_eval.add_argument("--report-dir", required=True)
    p_eval.add_argument("--train-per-class", type=int, default=12)
    p_eval.add_argument("--test-per-class", type=int, default=5)
    _add_backend_flags(p_eval)

    p_exp = sub.add_parser("export-embeddings",
                           help="export store embeddings as EMB1 + labels sidecar")
    p_exp.add_argument("--store", required=True)
    p_exp.add_argument("--output", required=True)
    p_exp.add_argument("--labels-output")

    known = set()
    for p in (p_enroll, p_detect, p_stats, p_bt, p_eval, p_exp):
        dests = {a.dest for a in p._actions}
        known |= dests
        overrides = {k: v for k, v in config.items() if k in dests}
        p.set_defaults(**overrides)
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_enroll(args) -> int:
    backend = _make_backend(args)
    if os.path.exists(args.store):
        store = load_store(args.store)
    else:
        store = PrototypeStore(dim=backend.descriptor.dim)
    cfg = EnrollmentConfig(
        margin_px=args.margin,
        use_augmentations=args.augment,
        main_object_prompt=args.prompt,
        nms_iou_threshold=args.nms_iou,
        min_confidence=args.min_confidence,
        adapter_enabled=args.adapter is not None,
        full_image_fallback=args.full_image_fallback,
    )
    log(f"enroll: margin={cfg.margin_px} augment={cfg.use_augmentations} "
        f"prompt={cfg.main_object_prompt!r}")
    adapter = adapter_mod.load_transform(args.adapter) if args.adapter else None
    clock = fixed_clock() if args.fixed_clock else None
    for path in args.images:
        img = load_image(path)
        before = len(store.get_or_create(args.label, label=args.label).raw)
        proto = enroll_image(store, args.label, img, backend, cfg,
                             adapter=adapter, label=args.label, clock=clock)
        added = len(proto.raw) - before
        crop = proto.provenance[-1].bbox
        log(f"{path}: crop={crop} added {added} vectors "
            f"(total {len(proto.raw)} for {args.label!r})")
    save_store(store, args.store)
    log(f"store saved to {args.store} ({len(store.prototypes)} objects)")
    return EXIT_OK


def cmd_detect(args) -> int:
    backend = _make_backend(args)
    store = load_store(args.store)
    cfg = InferenceConfig(min_confidence=args.min_confidence,
                          nms_iou_threshold=args.nms_iou)
    records = []
    for path in args.images:
        img = load_image(path)
        result = classify_query(img, store, backend, cfg)
        records.append(result_record(path, result))
    text = json.dumps(records, indent=1)
    if args.output:
        tmp = args.output + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, args.output)
        log(f"wrote {len(records)} records to {args.output}")
    else:
        print(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    dim, batch = read_embedding_file(args.input)
    stats = adapter_mod.estimate_stats(batch)
    adapter_mod.save_stats(stats, args.output)
    eigvals = np.linalg.eigvalsh(stats.cov)
    log(f"stats: dim={dim} n={stats.n} eigenvalues min={eigvals.min():.6g} "
        f"max={eigvals.max():.6g}")
    return EXIT_OK


def cmd_build_transform(args) -> int:
    img_stats = adapter_mod.load_stats(args.image_stats)
    txt_stats = adapter_mod.load_stats(args.text_stats)
    transform = adapter_mod.build_transform(img_stats, txt_stats, args.epsilon)
    adapter_mod.save_transform(transform, args.output)
    eig_img = np.linalg.eigvalsh(img_stats.cov)
    floored = int(np.sum(eig_img < args.epsilon))
    log(f"transform: dim={transform.dim} epsilon={args.epsilon} "
        f"image eigenvalues min={eig_img.min():.6g} max={eig_img.max():.6g} "
        f"floored={floored}")
    return EXIT_OK


def _parse_int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v != "")


def _parse_bool_list(text: str) -> tuple:
    return tuple(bool(int(v)) for v in text.split(",") if v != "")


def cmd_eval(args) -> int:
    grid = eh.ExperimentGrid(
        class_counts=_parse_int_list(args.classes),
        shot_counts=_parse_int_list(args.shots),
        repeats=args.repeats,
        base_seed=args.seed,
        augmentation_modes=_parse_bool_list(args.aug_modes),
        adapter_modes=_parse_bool_list(args.adapter_modes),
        model_sizes=tuple(args.sizes.split(",")),
    )
    adapter_factory = None
    if args.backend == "mock":
        factory = eh.MockBackendFactory(
            num_classes=args.mock_classes,
            dim=args.dim,
            seed=args.seed,
            image_size=args.mock_image_size,
        )
        loader = eh.MockImageLoader()
        if args.manifest:
            manifest = eh.load_manifest(args.manifest)
        else:
            manifest = eh.make_mock_manifest(args.mock_classes,
                                             args.train_per_class,
                                             args.test_per_class)
        if any(grid.adapter_modes):
            adapter_factory = eh.build_mock_adapter
    else:
        if not args.backend_dir:
            raise ValueError("--backend-dir is required with --backend external-files")
        if not args.manifest:
            raise ValueError("--manifest is required with --backend external-files")
        root = args.backend_dir

        def factory(size, _root=root, _dim=args.dim):
            return ExternalFilesBackend(os.path.join(_root, size), dim=_dim,
                                        model_size=size)

        loader = eh.FileImageLoader(args.image_root)
        manifest = eh.load_manifest(args.manifest)
        if any(grid.adapter_modes):
            if not args.transform:
                raise ValueError("--transform is required when adapter modes are on")
            transform = adapter_mod.load_transform(args.transform)
            adapter_factory = lambda backend: transform  # noqa: E731

    enroll_cfg = EnrollmentConfig(margin_px=args.margin)
    results, aggregates = eh.run_grid(
        grid, manifest, factory, loader,
        adapter_factory=adapter_factory,
        enroll_cfg=enroll_cfg,
        jobs=args.jobs,
    )
    paths = eh.write_reports(args.report_dir, grid, results, aggregates,
                             bins=args.bins)
    log(f"wrote reports: {', '.join(sorted(paths))} in {args.report_dir}")
    print(eh.render_table(aggregates))
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    store = load_store(args.store)
    eh.export_embeddings(store, args.output, labels_path=args.labels_output)
    log(f"exported {sum(len(p.raw) for p in store.prototypes)} embeddings "
        f"to {args.output}")
    return EXIT_OK


COMMANDS = {
    "enroll": cmd_enroll,
    "detect": cmd_detect,
    "stats": cmd_stats,
    "build-transform": cmd_build_transform,
    "eval": cmd_eval,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = _load_config_file(argv)
        parser = build_parser(config)
    except (OSError, ValueError) as exc:
        log(f"error: {exc}")
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except NoDetection as exc:
        log(f"no-detection: {exc}")
        return EXIT_NO_DETECTION
    except BackendFailure as exc:
        log(f"backend error: {exc}")
        return EXIT_BACKEND
    except (TdidError, OSError) as exc:
        log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_IO_FORMAT
    except (ValueError, KeyError) as exc:
        log(f"usage error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
