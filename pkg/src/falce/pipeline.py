"""End-to-end enhancement pipeline and batch driver.

The source branch turns a dense-breast image into a fatty-adapted,
contrast-enhanced one: low-frequency amplitude transfer from a sampled
fatty image, adaptive equalization, then an overlay of the foreground
mask computed from the *original* dense image.  The target branch
applies the adaptive equalization alone.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import logging
import pathlib
import random
import sys

import numpy as np

from falce import image as img_mod
from falce.enhance import ClaheParams, clahe
from falce.errors import FalceError, ImageIOError
from falce.image import GrayImage
from falce.segment import StructElem, apply_mask, breast_mask
from falce.spectral import fda_transfer

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

log = logging.getLogger("falce")

#: Shorter-side extent used when no explicit working size is configured.
DEFAULT_SHORT_SIDE = 640

_CONFIG_KEYS = {"beta", "clahe", "struct_elem", "working_size", "seed"}
_CLAHE_KEYS = {"clip_limit", "tiles_x", "tiles_y"}
_SE_KEYS = {"shape", "radius"}


@dataclasses.dataclass(frozen=True)
class FalceConfig:
    """Knobs for the full pipeline.

    ``working_size`` of ``None`` means: scale each input so its shorter
    side is 640 (aspect preserved), then centre-pad both with zeros to a
    common canvas.  A ``(width, height)`` pair resizes both inputs to
    exactly that size instead.
    """

    beta: float = 0.01
    clahe: ClaheParams = ClaheParams()
    struct_elem: StructElem = StructElem()
    working_size: tuple | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if self.working_size is not None:
            w, h = self.working_size
            if int(w) < 1 or int(h) < 1:
                raise ValueError("working_size must be positive")
            object.__setattr__(self, "working_size", (int(w), int(h)))


@dataclasses.dataclass(frozen=True)
class BatchReport:
    """Outcome of one batch run."""

    processed: int
    failures: tuple          # (source id, error description)
    manifest: tuple          # (source id, target id, output path)

    def __post_init__(self):
        object.__setattr__(self, "failures", tuple(self.failures))
        object.__setattr__(self, "manifest", tuple(self.manifest))
        if self.processed != len(self.manifest):
            raise ValueError("processed count must match manifest length")


def load_config(path) -> FalceConfig:
    """Parse a TOML config file into a :class:`FalceConfig`.

    Unknown keys are rejected so typos fail loudly; missing keys fall
    back to defaults.
    """
    p = pathlib.Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read config ({exc})") from exc
    try:
        data = _toml.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, _toml.TOMLDecodeError) as exc:
        raise ValueError(f"{path}: malformed config ({exc})") from exc
    return config_from_mapping(data, source=str(path))


def config_from_mapping(data: dict, source: str = "config") -> FalceConfig:
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"{source}: unknown config keys {sorted(unknown)}")
    kwargs = {}
    if "beta" in data:
        kwargs["beta"] = float(data["beta"])
    if "clahe" in data:
        sub = data["clahe"]
        bad = set(sub) - _CLAHE_KEYS
        if bad:
            raise ValueError(f"{source}: unknown clahe keys {sorted(bad)}")
        kwargs["clahe"] = ClaheParams(
            clip_limit=float(sub.get("clip_limit", 2.0)),
            tiles_x=int(sub.get("tiles_x", 8)),
            tiles_y=int(sub.get("tiles_y", 8)))
    if "struct_elem" in data:
        sub = data["struct_elem"]
        bad = set(sub) - _SE_KEYS
        if bad:
            raise ValueError(f"{source}: unknown struct_elem keys {sorted(bad)}")
        kwargs["struct_elem"] = StructElem(
            shape=str(sub.get("shape", "square")),
            radius=int(sub.get("radius", 2)))
    if "working_size" in data:
        ws = data["working_size"]
        if not isinstance(ws, (list, tuple)) or len(ws) != 2:
            raise ValueError(f"{source}: working_size must be [width, height]")
        kwargs["working_size"] = (int(ws[0]), int(ws[1]))
    if "seed" in data:
        kwargs["rng_seed"] = int(data["seed"])
    return FalceConfig(**kwargs)


def _scale_short_side(img: GrayImage, short: int) -> GrayImage:
    if img.width <= img.height:
        new_w = short
        new_h = max(1, int(round(img.height * short / img.width)))
    else:
        new_h = short
        new_w = max(1, int(round(img.width * short / img.height)))
    if (new_w, new_h) == (img.width, img.height):
        return img
    return img_mod.resize(img, new_w, new_h)


def _center_pad(img: GrayImage, width: int, height: int) -> GrayImage:
    if (img.width, img.height) == (width, height):
        return img
    canvas = np.zeros((height, width), dtype=np.float64)
    y0 = (height - img.height) // 2
    x0 = (width - img.width) // 2
    canvas[y0:y0 + img.height, x0:x0 + img.width] = img.pixels
    return GrayImage(canvas, img.source_bit_depth)


def _to_working_geometry(dense: GrayImage, fatty: GrayImage, cfg: FalceConfig):
    if cfg.working_size is not None:
        w, h = cfg.working_size
        return img_mod.resize(dense, w, h), img_mod.resize(fatty, w, h)
    dense = _scale_short_side(dense, DEFAULT_SHORT_SIDE)
    fatty = _scale_short_side(fatty, DEFAULT_SHORT_SIDE)
    width = max(dense.width, fatty.width)
    height = max(dense.height, fatty.height)
    return _center_pad(dense, width, height), _center_pad(fatty, width, height)


def read_pairs_csv(path) -> list:
    """Read an image manifest of ``(image_id, path)`` rows.

    Header must be ``image_id,path``; ids must be non-empty and unique.
    """
    from falce.errors import CsvFormatError
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CsvFormatError(path, 0, f"cannot open ({exc})")
    pairs = []
    seen = set()
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "path"]:
            raise CsvFormatError(path, 1, "expected header image_id,path")
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise CsvFormatError(path, line, "expected exactly 2 fields")
            image_id, img_path = row
            if not image_id:
                raise CsvFormatError(path, line, "empty image_id")
            if image_id in seen:
                raise CsvFormatError(path, line, f"duplicate image_id {image_id!r}")
            seen.add(image_id)
            pairs.append((image_id, img_path))
    return pairs


def falce_source(dense: GrayImage, fatty: GrayImage, cfg: FalceConfig,
                 stage_hook=None) -> GrayImage:
    """Fatty-adapted, contrast-enhanced rendition of a dense image.

    Amplitude transfer runs first, adaptive equalization second, and the
    foreground overlay last — with the mask always taken from the dense
    image as it entered the pipeline, so enhancement cannot shift the
    outline.  ``stage_hook`` (if given) is called with each stage name in
    execution order.
    """
    hook = stage_hook or (lambda name: None)
    dense, fatty = _to_working_geometry(dense, fatty, cfg)
    hook("resize")
    mask = breast_mask(dense, cfg.struct_elem)
    hook("mask")
    adapted = fda_transfer(dense, fatty, cfg.beta)
    hook("fda")
    enhanced = clahe(adapted, cfg.clahe)
    hook("clahe")
    out = apply_mask(enhanced, mask)
    hook("overlay")
    return out


def falce_target(fatty: GrayImage, cfg: FalceConfig) -> GrayImage:
    """Enhancement-only branch used for the fatty domain."""
    return clahe(fatty, cfg.clahe)


def _process_one(sid: str, src_path: str, tid: str, tgt_path: str,
                 cfg: FalceConfig, out_dir: pathlib.Path) -> str:
    dense = img_mod.load_image(src_path)
    fatty = img_mod.load_image(tgt_path)
    result = falce_source(dense, fatty, cfg)
    out_path = out_dir / f"{sid}__{tid}.png"
    img_mod.save_image(result, out_path, bit_depth=16)
    return str(out_path)


def run_batch(sources, targets, cfg: FalceConfig, out_dir,
              jobs: int = 1) -> BatchReport:
    """Process every source against a seeded uniform draw of targets.

    ``sources`` and ``targets`` are sequences of ``(id, path)`` pairs.
    Pairings are drawn up front, in manifest order, from
    ``random.Random(cfg.rng_seed)``, so worker count cannot change them.
    Failures are recorded per image and never abort the batch.  Writes
    ``manifest.csv`` (header ``source_id,target_id,output_path``) into
    ``out_dir`` and returns the report.
    """
    sources = list(sources)
    targets = list(targets)
    if not sources or not targets:
        raise ValueError("source and target manifests must be non-empty")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(cfg.rng_seed)
    pairs = [(sid, spath, *targets[rng.randrange(len(targets))])
             for sid, spath in sources]

    rows = []
    failures = []

    def handle(pair):
        sid, spath, tid, tpath = pair
        try:
            return sid, tid, _process_one(sid, spath, tid, tpath, cfg, out_dir), None
        except FalceError as exc:
            return sid, tid, None, str(exc)

    if jobs == 1:
        results = [handle(p) for p in pairs]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(handle, pairs))

    for sid, tid, out_path, err in results:
        if err is None:
            rows.append((sid, tid, out_path))
        else:
            log.info("failed %s: %s", sid, err)
            failures.append((sid, err))

    rows.sort(key=lambda r: r[0])
    failures.sort(key=lambda r: r[0])
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "target_id", "output_path"])
        writer.writerows(rows)
    return BatchReport(processed=len(rows), failures=tuple(failures),
                       manifest=tuple(rows))
