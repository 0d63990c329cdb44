"""Command line front end.

One executable, several subcommands; every flag mirrors a config key and
flags win over the config file.  Standard output carries only
machine-readable results; diagnostics go to standard error, gated by the
``FALCE_LOG`` environment variable (error, info, or debug).

Exit codes are stable: 0 success, 1 usage or parameter error, 2
input/output error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from falce import daod, evalkit, image, pipeline, segment, spectral
from falce.enhance import ClaheParams, clahe
from falce.errors import CsvFormatError, FalceError, ImageIOError, NumericsError
from falce.image import GrayImage
from falce.segment import StructElem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

log = logging.getLogger("falce")


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_tiles(text: str):
    """Accept '8' or '8x8' (columns x rows)."""
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            n = int(parts[0])
            return n, n
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected N or NXxNY, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="falce",
                     description="Fourier-adapted locality contrast enhancement "
                                 "tools: pipeline, kernels, evaluators.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fda", help="low-frequency amplitude transfer between two images")
    p.add_argument("src", help="source image (keeps its phase)")
    p.add_argument("tgt", help="target image (donates low-frequency amplitude)")
    p.add_argument("--beta", type=float, default=0.01,
                   help="relative size of the swapped block (default 0.01)")
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("run", help="run the full enhancement batch")
    p.add_argument("config", help="TOML config file")
    p.add_argument("source_manifest", help="CSV of dense images (image_id,path)")
    p.add_argument("target_manifest", help="CSV of fatty images (image_id,path)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--beta", type=float, default=None, help="override config beta")
    p.add_argument("--clip-limit", type=float, default=None,
                   help="override CLAHE clip limit")
    p.add_argument("--tiles", type=_parse_tiles, default=None,
                   help="override CLAHE tile grid (N or NXxNY)")
    p.add_argument("--se-shape", choices=("square", "disk"), default=None,
                   help="override structuring element shape")
    p.add_argument("--se-radius", type=int, default=None,
                   help="override structuring element radius")
    p.add_argument("--seed", type=int, default=None, help="override sampling seed")

    p = sub.add_parser("eval-map", help="score detections against a manifest")
    p.add_argument("gt_csv", help="ground-truth manifest CSV")
    p.add_argument("det_csv", help="detections CSV")
    p.add_argument("--iou-thr", type=float, default=evalkit.DEFAULT_IOU_THR,
                   help="matching IoU threshold (default 0.5)")

    p = sub.add_parser("daod-demo", help="train the toy min-max model")
    p.add_argument("--steps", type=int, default=2000,
                   help="gradient steps (default 2000)")
    p.add_argument("--lr", type=float, default=0.05,
                   help="learning rate for both players (default 0.05)")
    p.add_argument("--lambda1", type=float, default=daod.LAMBDA1_DEFAULT,
                   help="adversarial weight (default %(default)s)")
    p.add_argument("--seed", type=int, default=7,
                   help="data and init seed (default 7)")
    p.add_argument("--out", required=True, help="history CSV path")

    p = sub.add_parser("split", help="density partition plus stratified split")
    p.add_argument("manifest", help="dataset manifest CSV")
    p.add_argument("--fraction", type=float, default=0.6,
                   help="train fraction for the fatty stratum split (default 0.6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("mask", help="compute the foreground mask of an image")
    p.add_argument("input", help="input image")
    p.add_argument("--se-shape", choices=("square", "disk"), default="square",
                   help="opening element shape (default square)")
    p.add_argument("--se-radius", type=int, default=2,
                   help="opening element radius (default 2)")
    p.add_argument("--out", required=True, help="output PNG path (8-bit 0/255)")

    p = sub.add_parser("clahe", help="contrast-limited adaptive equalization")
    p.add_argument("input", help="input image")
    p.add_argument("--clip-limit", type=float, default=2.0,
                   help="histogram clip as a multiple of the mean bin "
                        "count (default 2.0)")
    p.add_argument("--tiles", type=_parse_tiles, default=(8, 8),
                   help="tile grid, COLSxROWS or one number (default 8x8)")
    p.add_argument("--out", required=True, help="output PNG path (16-bit)")

    return parser


def cmd_fda(args) -> int:
    src = image.load_image(args.src)
    tgt = image.load_image(args.tgt)
    if (tgt.width, tgt.height) != (src.width, src.height):
        tgt = image.resize(tgt, src.width, src.height)
    out = spectral.fda_transfer(src, tgt, args.beta)
    image.save_image(out, args.out, bit_depth=16)
    print(args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = pipeline.load_config(args.config)
    overrides = {}
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.clip_limit is not None or args.tiles is not None:
        tiles = args.tiles or (cfg.clahe.tiles_x, cfg.clahe.tiles_y)
        clip = args.clip_limit if args.clip_limit is not None else cfg.clahe.clip_limit
        overrides["clahe"] = ClaheParams(clip_limit=clip, tiles_x=tiles[0],
                                         tiles_y=tiles[1], bins=cfg.clahe.bins)
    if args.se_shape is not None or args.se_radius is not None:
        overrides["struct_elem"] = StructElem(
            shape=args.se_shape or cfg.struct_elem.shape,
            radius=args.se_radius if args.se_radius is not None
            else cfg.struct_elem.radius)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    sources = pipeline.read_pairs_csv(args.source_manifest)
    targets = pipeline.read_pairs_csv(args.target_manifest)
    report = pipeline.run_batch(sources, targets, cfg, args.out, jobs=args.jobs)
    for sid, err in report.failures:
        log.error("%s failed: %s", sid, err)
    print("processed,failures,manifest")
    print(f"{report.processed},{len(report.failures)},"
          f"{os.path.join(args.out, 'manifest.csv')}")
    if report.processed == 0:
        return EXIT_IO
    return EXIT_OK


def cmd_eval_map(args) -> int:
    gts = evalkit.ground_truths_from_manifest(evalkit.read_manifest_csv(args.gt_csv))
    dets = evalkit.read_detections_csv(args.det_csv)
    map_value, per_class = evalkit.mean_ap(dets, gts, evalkit.NUM_CLASSES,
                                           args.iou_thr)
    sys.stdout.write(evalkit.format_eval_report(map_value, per_class))
    return EXIT_OK


def cmd_daod_demo(args) -> int:
    state, _ = daod.run_demo(steps=args.steps, lr=args.lr,
                             lambda1=args.lambda1, seed=args.seed)
    header = "step,l_det,l_dis,l_total,disc_acc,class_acc"
    lines = [header]
    for rec in state.history:
        lines.append(f"{rec.step},{rec.det_loss:.9f},{rec.dis_loss:.9f},"
                     f"{rec.total_loss:.9f},{rec.disc_acc:.6f},{rec.class_acc:.6f}")
    with open(args.out, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    print(header)
    print(lines[-1])
    return EXIT_OK


def cmd_split(args) -> int:
    records = evalkit.read_manifest_csv(args.manifest)
    denb, fatb = evalkit.split_by_density(records)
    train, test = evalkit.stratified_split(fatb, args.fraction, args.seed)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    evalkit.write_manifest_csv(denb, os.path.join(out_dir, "denb.csv"))
    evalkit.write_manifest_csv(train, os.path.join(out_dir, "fatb_train.csv"))
    evalkit.write_manifest_csv(test, os.path.join(out_dir, "fatb_test.csv"))
    print("subset,count")
    print(f"denb,{len(denb)}")
    print(f"fatb_train,{len(train)}")
    print(f"fatb_test,{len(test)}")
    return EXIT_OK


def cmd_mask(args) -> int:
    img = image.load_image(args.input)
    se = StructElem(shape=args.se_shape, radius=args.se_radius)
    mask = segment.breast_mask(img, se)
    image.save_image(GrayImage(mask.bits.astype(float), 8), args.out, bit_depth=8)
    print(args.out)
    return EXIT_OK


def cmd_clahe(args) -> int:
    img = image.load_image(args.input)
    params = ClaheParams(clip_limit=args.clip_limit, tiles_x=args.tiles[0],
                         tiles_y=args.tiles[1])
    image.save_image(clahe(img, params), args.out, bit_depth=16)
    print(args.out)
    return EXIT_OK


_COMMANDS = {
    "fda": cmd_fda,
    "run": cmd_run,
    "eval-map": cmd_eval_map,
    "daod-demo": cmd_daod_demo,
    "split": cmd_split,
    "mask": cmd_mask,
    "clahe": cmd_clahe,
}

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("FALCE_LOG", "error"), logging.ERROR)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("falce: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)


def main(argv=None) -> int:
    """Run one subcommand; returns the exit code instead of raising."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ImageIOError, CsvFormatError) as exc:
        sys.stderr.write(f"falce: {exc}\n")
        return EXIT_IO
    except NumericsError as exc:
        sys.stderr.write(f"falce: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"falce: {exc}\n")
        return EXIT_USAGE
    except FalceError as exc:
        sys.stderr.write(f"falce: {exc}\n")
        return EXIT_IO


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
