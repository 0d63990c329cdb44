"""Detection evaluation (per-class AP, mAP) and dataset split machinery.

The matching protocol: detections of a class are sorted by descending
score (stable, so insertion order breaks ties), each one greedily claims
the unmatched ground truth with the highest overlap at or above the
threshold in its own image, and average precision integrates the
precision envelope over all recall points.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import random
from typing import Iterable, Sequence

import numpy as np

from falce.daod import BBox, iou
from falce.errors import CsvFormatError

DEFAULT_IOU_THR = 0.5

_DENSITIES = ("A", "B", "C", "D")

#: Number of finding classes kept after label normalization.
NUM_CLASSES = 4

_LABEL_TABLE = {
    "mass": 0,
    "suspicious calcification": 1,
    "asymmetry": 2,
    "focal asymmetry": 2,
    "global asymmetry": 2,
    "suspicious lymph node": 3,
    "suspicious lymph nodes": 3,
}


@dataclasses.dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: BBox
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")


@dataclasses.dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: BBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")


@dataclasses.dataclass(frozen=True)
class ManifestRecord:
    """One image of a dataset manifest with its raw (unmapped) findings."""

    image_id: str
    path: str
    density: str
    raw_findings: tuple = ()

    def __post_init__(self):
        if self.density not in _DENSITIES:
            raise ValueError("density must be one of A, B, C, D")
        object.__setattr__(self, "raw_findings", tuple(self.raw_findings))


def map_classes(raw_label: str):
    """Normalize a raw finding label to a class id, or ``None`` to drop it.

    Mass → 0, suspicious calcification → 1, any asymmetry variant → 2,
    suspicious lymph nodes → 3.  Matching is case- and
    whitespace-insensitive.
    """
    return _LABEL_TABLE.get(" ".join(raw_label.strip().lower().split()))


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                      class_id: int, iou_thr: float = DEFAULT_IOU_THR) -> float:
    """Average precision of one class under greedy IoU matching."""
    if not (0.0 < iou_thr < 1.0):
        raise ValueError("iou_thr must lie in (0, 1)")
    cls_dets = [d for d in dets if d.class_id == class_id]
    cls_dets.sort(key=lambda d: -d.score)   # stable: ties keep input order
    gt_boxes: dict = {}
    for g in gts:
        if g.class_id == class_id:
            gt_boxes.setdefault(g.image_id, []).append(g.box)
    npos = sum(len(v) for v in gt_boxes.values())
    if npos == 0 or not cls_dets:
        return 0.0

    matched = {img: [False] * len(boxes) for img, boxes in gt_boxes.items()}
    tp = np.zeros(len(cls_dets))
    fp = np.zeros(len(cls_dets))
    for k, det in enumerate(cls_dets):
        boxes = gt_boxes.get(det.image_id, [])
        best_iou = 0.0
        best_j = -1
        for j, box in enumerate(boxes):
            if matched[det.image_id][j]:
                continue
            overlap = iou(det.box, box)
            if overlap >= iou_thr and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched[det.image_id][best_j] = True
            tp[k] = 1.0
        else:
            fp[k] = 1.0

    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / npos
    precision = cum_tp / (cum_tp + cum_fp)
    # precision envelope over [0, 1] recall, integrated at recall steps
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth],
            num_classes: int, iou_thr: float = DEFAULT_IOU_THR):
    """Unweighted mean AP over classes with ground truth.

    Returns ``(map_value, per_class)`` where ``per_class`` maps each
    evaluated class id to its AP.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    with_gt = sorted({g.class_id for g in gts if 0 <= g.class_id < num_classes})
    if not with_gt:
        raise ValueError("no class has ground truth")
    per_class = {c: average_precision(dets, gts, c, iou_thr) for c in with_gt}
    return float(np.mean(list(per_class.values()))), per_class


def split_by_density(manifest: Sequence[ManifestRecord]):
    """Partition records into dense (C, D) and fatty (A, B) breasts."""
    denb = [r for r in manifest if r.density in ("C", "D")]
    fatb = [r for r in manifest if r.density in ("A", "B")]
    return denb, fatb


def _signature(record: ManifestRecord) -> tuple:
    labels = {map_classes(label) for label, _ in record.raw_findings}
    return tuple(sorted(c for c in labels if c is not None))


def stratified_split(records: Sequence[ManifestRecord], train_fraction: float,
                     seed: int):
    """Deterministic stratified split keyed on each record's label set.

    Records sharing the same set of mapped finding classes form a
    stratum; each stratum is shuffled with the seeded generator and its
    first ``ceil(fraction * n)`` records go to train.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie in (0, 1)")
    strata: dict = {}
    for rec in records:
        strata.setdefault(_signature(rec), []).append(rec)
    rng = random.Random(seed)
    train: list = []
    test: list = []
    for key in sorted(strata):
        group = strata[key][:]
        rng.shuffle(group)
        n_train = min(len(group),
                      math.ceil(train_fraction * len(group) - 1e-9))
        train.extend(group[:n_train])
        test.extend(group[n_train:])
    return train, test


# ---------------------------------------------------------------------------
# CSV round-trips
# ---------------------------------------------------------------------------

def _parse_float(value: str, path, line, field: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise CsvFormatError(path, line, f"{field} must be a number, got {value!r}")


def _parse_box(row: dict, path, line) -> BBox:
    coords = [_parse_float(row[k], path, line, k) for k in ("x1", "y1", "x2", "y2")]
    try:
        return BBox(*coords)
    except ValueError as exc:
        raise CsvFormatError(path, line, str(exc))


def _open_reader(path, required: tuple):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CsvFormatError(path, 0, f"cannot open ({exc})")
    reader = csv.DictReader(fh)
    header = reader.fieldnames
    if header is None or tuple(header) != required:
        fh.close()
        raise CsvFormatError(path, 1,
                             f"expected header {','.join(required)}")
    return fh, reader


def read_manifest_csv(path) -> list[ManifestRecord]:
    """Read a dataset manifest (one row per finding, images may repeat)."""
    required = ("image_id", "path", "density", "label", "x1", "y1", "x2", "y2")
    fh, reader = _open_reader(path, required)
    order: list[str] = []
    by_id: dict = {}
    with fh:
        for line, row in enumerate(reader, start=2):
            if any(row.get(k) is None for k in required):
                raise CsvFormatError(path, line, "wrong number of fields")
            image_id = row["image_id"]
            if image_id == "":
                raise CsvFormatError(path, line, "empty image_id")
            box_fields = [row[k] for k in ("x1", "y1", "x2", "y2")]
            has_label = row["label"] != ""
            has_box = any(f != "" for f in box_fields)
            if has_box != has_label:
                raise CsvFormatError(path, line,
                                     "label and box must be both present or both empty")
            finding = (row["label"], _parse_box(row, path, line)) if has_label else None
            if image_id not in by_id:
                if row["density"] not in _DENSITIES:
                    raise CsvFormatError(
                        path, line, f"density must be one of A-D, got {row['density']!r}")
                order.append(image_id)
                by_id[image_id] = {
                    "path": row["path"],
                    "density": row["density"],
                    "findings": [],
                }
            else:
                known = by_id[image_id]
                if known["path"] != row["path"] or known["density"] != row["density"]:
                    raise CsvFormatError(
                        path, line, f"conflicting path/density for image {image_id!r}")
            if finding is not None:
                by_id[image_id]["findings"].append(finding)
            elif by_id[image_id]["findings"]:
                raise CsvFormatError(
                    path, line, f"empty-findings row for image {image_id!r} "
                    "that already has findings")
    return [ManifestRecord(image_id=image_id, path=by_id[image_id]["path"],
                           density=by_id[image_id]["density"],
                           raw_findings=tuple(by_id[image_id]["findings"]))
            for image_id in order]


def write_manifest_csv(records: Iterable[ManifestRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "path", "density", "label",
                         "x1", "y1", "x2", "y2"])
        for rec in records:
            if not rec.raw_findings:
                writer.writerow([rec.image_id, rec.path, rec.density,
                                 "", "", "", "", ""])
                continue
            for label, box in rec.raw_findings:
                writer.writerow([rec.image_id, rec.path, rec.density, label,
                                 _fmt(box.x1), _fmt(box.y1),
                                 _fmt(box.x2), _fmt(box.y2)])


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def read_detections_csv(path) -> list[Detection]:
    required = ("image_id", "class_id", "score", "x1", "y1", "x2", "y2")
    fh, reader = _open_reader(path, required)
    dets = []
    with fh:
        for line, row in enumerate(reader, start=2):
            if any(row.get(k) is None for k in required):
                raise CsvFormatError(path, line, "wrong number of fields")
            try:
                class_id = int(row["class_id"])
            except ValueError:
                raise CsvFormatError(path, line,
                                     f"class_id must be an integer, got {row['class_id']!r}")
            score = _parse_float(row["score"], path, line, "score")
            box = _parse_box(row, path, line)
            try:
                dets.append(Detection(image_id=row["image_id"], class_id=class_id,
                                      box=box, score=score))
            except ValueError as exc:
                raise CsvFormatError(path, line, str(exc))
    return dets


def ground_truths_from_manifest(records: Sequence[ManifestRecord]) -> list[GroundTruth]:
    """Expand manifest findings into ground-truth boxes, dropping unmapped labels."""
    gts = []
    for rec in records:
        for label, box in rec.raw_findings:
            class_id = map_classes(label)
            if class_id is not None:
                gts.append(GroundTruth(image_id=rec.image_id,
                                       class_id=class_id, box=box))
    return gts


def format_eval_report(map_value: float, per_class: dict) -> str:
    """Render the evaluation report CSV (per-class rows plus a mAP row)."""
    lines = ["class_id,ap"]
    for class_id in sorted(per_class):
        lines.append(f"{class_id},{per_class[class_id]:.6f}")
    lines.append(f"mAP,{map_value:.6f}")
    return "\n".join(lines) + "\n"
