"""Detection evaluation, class mapping, manifests, and dataset splits."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from falce.daod import BBox
from falce.errors import CsvFormatError
from falce.evalkit import (Detection, GroundTruth, ManifestRecord,
                           average_precision, format_eval_report,
                           ground_truths_from_manifest, map_classes, mean_ap,
                           read_detections_csv, read_manifest_csv,
                           split_by_density, stratified_split,
                           write_manifest_csv)
from oracles import brute_average_precision, brute_mean_ap


def _box(x, y, w=2.0, h=2.0):
    return BBox(float(x), float(y), float(x + w), float(y + h))


def random_scene(rng, n_classes=4, max_boxes=10):
    """Random ground truths and detections over a handful of images."""
    images = [f"im{i}" for i in range(int(rng.integers(1, 4)))]
    gts, dets = [], []
    for _ in range(int(rng.integers(1, max_boxes + 1))):
        gts.append(GroundTruth(str(rng.choice(images)),
                               int(rng.integers(0, n_classes)),
                               _box(rng.uniform(0, 8), rng.uniform(0, 8),
                                    rng.uniform(1, 4), rng.uniform(1, 4))))
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        if gts and rng.random() < 0.6:
            # jittered copy of a ground truth so matches actually occur
            gt = gts[int(rng.integers(0, len(gts)))]
            dx, dy = rng.uniform(-1.5, 1.5, size=2)
            box = BBox(gt.box.x1 + dx, gt.box.y1 + dy,
                       gt.box.x2 + dx, gt.box.y2 + dy)
            dets.append(Detection(gt.image_id, gt.class_id, box,
                                  float(rng.uniform(0, 1))))
        else:
            dets.append(Detection(str(rng.choice(images)),
                                  int(rng.integers(0, n_classes)),
                                  _box(rng.uniform(0, 8), rng.uniform(0, 8),
                                       rng.uniform(1, 4), rng.uniform(1, 4)),
                                  float(rng.uniform(0, 1))))
    return dets, gts


class TestAveragePrecision:
    def test_matches_brute_oracle(self, rng):
        for _ in range(100):
            dets, gts = random_scene(rng)
            thr = float(rng.uniform(0.25, 0.75))
            for c in range(4):
                got = average_precision(dets, gts, c, thr)
                want = brute_average_precision(dets, gts, c, thr)
                assert abs(got - want) < 1e-9

    def test_perfect_detection_is_one(self):
        gts = [GroundTruth("a", 0, _box(0, 0)), GroundTruth("a", 0, _box(5, 5)),
               GroundTruth("b", 0, _box(2, 2))]
        dets = [Detection(g.image_id, 0, g.box, 0.9 - 0.1 * i)
                for i, g in enumerate(gts)]
        assert average_precision(dets, gts, 0) == 1.0

    def test_no_detections_is_zero(self):
        gts = [GroundTruth("a", 1, _box(0, 0))]
        assert average_precision([], gts, 1) == 0.0

    def test_no_ground_truth_is_zero(self):
        dets = [Detection("a", 2, _box(0, 0), 0.5)]
        assert average_precision(dets, [], 2) == 0.0

    def test_one_hit_one_miss(self):
        # Ranked: TP then FP on a two-object scene.  Recall tops out at
        # 0.5 with precision 1 there, so the area is 0.5.
        gts = [GroundTruth("a", 0, _box(0, 0)), GroundTruth("a", 0, _box(10, 10))]
        dets = [Detection("a", 0, _box(0, 0), 0.9),
                Detection("a", 0, _box(20, 20), 0.8)]
        assert average_precision(dets, gts, 0) == 0.5

    def test_late_tp_after_fp(self):
        # FP at rank 1, TP at rank 2: precision at full recall is 1/2.
        gts = [GroundTruth("a", 0, _box(0, 0))]
        dets = [Detection("a", 0, _box(20, 20), 0.9),
                Detection("a", 0, _box(0, 0), 0.8)]
        assert average_precision(dets, gts, 0) == 0.5

    def test_each_gt_matches_at_most_once(self):
        # Two identical detections on one object: the second is a FP.
        gts = [GroundTruth("a", 0, _box(0, 0))]
        dets = [Detection("a", 0, _box(0, 0), 0.9),
                Detection("a", 0, _box(0, 0), 0.8)]
        assert average_precision(dets, gts, 0) == 1.0
        # and reversed ranks give the same area
        dets[0], dets[1] = (Detection("a", 0, _box(0, 0), 0.8),
                            Detection("a", 0, _box(0, 0), 0.9))
        assert average_precision(dets, gts, 0) == 1.0

    def test_matches_respect_image_boundaries(self):
        gts = [GroundTruth("a", 0, _box(0, 0))]
        dets = [Detection("b", 0, _box(0, 0), 0.9)]
        assert average_precision(dets, gts, 0) == 0.0

    def test_iou_threshold_validation(self):
        gts = [GroundTruth("a", 0, _box(0, 0))]
        with pytest.raises(ValueError):
            average_precision([], gts, 0, iou_thr=0.0)
        with pytest.raises(ValueError):
            average_precision([], gts, 0, iou_thr=1.0)


class _Scenes:
    """Hypothesis strategies for small detection scenes."""

    coords = st.integers(min_value=0, max_value=6)
    sizes = st.integers(min_value=1, max_value=4)

    @classmethod
    def boxes(cls):
        return st.builds(lambda x, y, w, h: BBox(x, y, x + w, y + h),
                         cls.coords, cls.coords, cls.sizes, cls.sizes)

    @classmethod
    def gts(cls):
        return st.lists(
            st.builds(GroundTruth, st.sampled_from(["a", "b"]),
                      st.integers(0, 2), cls.boxes()),
            min_size=1, max_size=8)

    @classmethod
    def dets(cls):
        return st.lists(
            st.builds(Detection, st.sampled_from(["a", "b"]),
                      st.integers(0, 2), cls.boxes(),
                      st.floats(0.01, 0.99, allow_nan=False)),
            min_size=0, max_size=8)


class TestApProperties:
    @given(dets=_Scenes.dets(), gts=_Scenes.gts())
    @settings(max_examples=60, deadline=None)
    def test_monotone_score_transform_is_invariant(self, dets, gts):
        # Ranking is all that matters: squashing scores through any
        # strictly increasing map cannot change the curve.
        squashed = [Detection(d.image_id, d.class_id, d.box,
                              0.05 + 0.9 * d.score ** 3) for d in dets]
        for c in range(3):
            assert (average_precision(dets, gts, c)
                    == average_precision(squashed, gts, c))

    @given(dets=_Scenes.dets(), gts=_Scenes.gts(), data=st.data())
    @settings(max_examples=60, deadline=None)
    def test_input_order_is_irrelevant_for_distinct_scores(self, dets, gts, data):
        # Break ties deterministically, then shuffle the list.
        distinct = [Detection(d.image_id, d.class_id, d.box,
                              (d.score + i) / (len(dets) + 1))
                    for i, d in enumerate(dets)]
        perm = data.draw(st.permutations(distinct))
        for c in range(3):
            assert (average_precision(distinct, gts, c)
                    == average_precision(perm, gts, c))

    @given(dets=_Scenes.dets(), gts=_Scenes.gts())
    @settings(max_examples=60, deadline=None)
    def test_extra_false_positive_never_helps(self, dets, gts):
        # A detection on an empty image can only add a false positive.
        baseline = [average_precision(dets, gts, c) for c in range(3)]
        spiked = dets + [Detection("empty-image", c, _box(0, 0), 0.5)
                         for c in range(3)]
        for c in range(3):
            assert average_precision(spiked, gts, c) <= baseline[c] + 1e-12

    @given(dets=_Scenes.dets(), gts=_Scenes.gts())
    @settings(max_examples=60, deadline=None)
    def test_ap_is_a_probability(self, dets, gts):
        for c in range(3):
            assert 0.0 <= average_precision(dets, gts, c) <= 1.0


class TestMeanAp:
    def test_averages_only_classes_with_ground_truth(self, rng):
        gts = [GroundTruth("a", 0, _box(0, 0)), GroundTruth("a", 2, _box(4, 4))]
        dets = [Detection("a", 0, _box(0, 0), 0.9),
                Detection("a", 1, _box(8, 8), 0.9)]
        value, per_class = mean_ap(dets, gts, num_classes=4)
        assert set(per_class) == {0, 2}
        assert value == (per_class[0] + per_class[2]) / 2
        assert per_class[0] == 1.0 and per_class[2] == 0.0

    def test_matches_brute_oracle(self, rng):
        for _ in range(30):
            dets, gts = random_scene(rng)
            got_v, got_pc = mean_ap(dets, gts, num_classes=4)
            want_v, want_pc = brute_mean_ap(dets, gts, 4, 0.5)
            assert got_pc.keys() == want_pc.keys()
            for c in got_pc:
                assert abs(got_pc[c] - want_pc[c]) < 1e-9
            assert abs(got_v - want_v) < 1e-9

    def test_no_ground_truth_at_all_is_an_error(self):
        with pytest.raises(ValueError):
            mean_ap([Detection("a", 0, _box(0, 0), 0.5)], [], 4)

    def test_report_format(self):
        text = format_eval_report(0.5, {0: 1.0, 2: 0.0})
        lines = text.strip().splitlines()
        assert lines[0] == "class_id,ap"
        assert "0,1.000000" in lines
        assert "2,0.000000" in lines
        assert lines[-1] == "mAP,0.500000"


class TestMapClasses:
    def test_known_labels(self):
        assert map_classes("Mass") == 0
        assert map_classes("suspicious  Calcification") == 1
        assert map_classes(" focal asymmetry ") == 2
        assert map_classes("Global Asymmetry") == 2
        assert map_classes("asymmetry") == 2
        assert map_classes("Suspicious Lymph Node") == 3

    def test_unknown_labels_are_none(self):
        assert map_classes("No Finding") is None
        assert map_classes("") is None
        assert map_classes("architectural distortion") is None


def _records():
    return [
        ManifestRecord("i1", "p/i1.png", "A",
                       (("Mass", _box(1, 1)),
                        ("Focal Asymmetry", _box(4, 4)))),
        ManifestRecord("i2", "p/i2.png", "C", ()),
        ManifestRecord("i3", "p/i3.png", "D", (("No Finding", _box(0, 0)),)),
        ManifestRecord("i4", "p/i4.png", "B", (("Mass", _box(2, 2)),)),
    ]


class TestManifestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.csv"
        write_manifest_csv(_records(), path)
        back = read_manifest_csv(path)
        assert back == _records()

    def test_ground_truths_drop_unmapped_labels(self):
        gts = ground_truths_from_manifest(_records())
        assert [(g.image_id, g.class_id) for g in gts] == [
            ("i1", 0), ("i1", 2), ("i4", 0)]

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density\na,b,C\n")
        with pytest.raises(CsvFormatError) as err:
            read_manifest_csv(path)
        assert err.value.line == 1

    def test_rejects_empty_image_id(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density,label,x1,y1,x2,y2\n"
                        ",p.png,A,,,,,\n")
        with pytest.raises(CsvFormatError) as err:
            read_manifest_csv(path)
        assert err.value.line == 2

    def test_rejects_label_without_box(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density,label,x1,y1,x2,y2\n"
                        "a,p.png,A,Mass,,,,\n")
        with pytest.raises(CsvFormatError):
            read_manifest_csv(path)

    def test_rejects_bad_density(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density,label,x1,y1,x2,y2\n"
                        "a,p.png,E,,,,,\n")
        with pytest.raises(CsvFormatError) as err:
            read_manifest_csv(path)
        assert "density" in err.value.reason

    def test_rejects_conflicting_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density,label,x1,y1,x2,y2\n"
                        "a,p.png,A,Mass,0,0,1,1\n"
                        "a,other.png,A,Mass,2,2,3,3\n")
        with pytest.raises(CsvFormatError) as err:
            read_manifest_csv(path)
        assert err.value.line == 3

    def test_rejects_degenerate_box(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,path,density,label,x1,y1,x2,y2\n"
                        "a,p.png,A,Mass,5,0,5,1\n")
        with pytest.raises(CsvFormatError):
            read_manifest_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CsvFormatError):
            read_manifest_csv(tmp_path / "absent.csv")

    def test_detections_round_trip_values(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("image_id,class_id,score,x1,y1,x2,y2\n"
                        "a,0,0.75,1,2,3,4\n"
                        "b,3,0.5,0,0,9,9\n")
        dets = read_detections_csv(path)
        assert len(dets) == 2
        assert dets[0].image_id == "a" and dets[0].score == 0.75
        assert dets[1].class_id == 3
        assert dets[0].box == BBox(1, 2, 3, 4)

    def test_detections_reject_bad_score(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("image_id,class_id,score,x1,y1,x2,y2\n"
                        "a,0,1.5,1,2,3,4\n")
        with pytest.raises(CsvFormatError):
            read_detections_csv(path)


def _density_manifest(counts: dict) -> list:
    records = []
    for density, n in counts.items():
        for i in range(n):
            label = () if i % 3 == 0 else (("Mass", _box(i, i)),)
            records.append(ManifestRecord(f"{density}{i}",
                                          f"p/{density}{i}.png",
                                          density, label))
    return records


class TestSplits:
    def test_density_partition(self):
        records = _density_manifest({"A": 3, "B": 2, "C": 4, "D": 1})
        denb, fatb = split_by_density(records)
        assert all(r.density in ("C", "D") for r in denb)
        assert all(r.density in ("A", "B") for r in fatb)
        assert len(denb) == 5 and len(fatb) == 5
        assert sorted(r.image_id for r in denb + fatb) == sorted(
            r.image_id for r in records)

    def test_partition_preserves_order(self):
        records = _density_manifest({"A": 2, "C": 2})
        denb, fatb = split_by_density(records)
        ids = [r.image_id for r in records]
        assert [r.image_id for r in denb] == [
            i for i in ids if i.startswith("C")]
        assert [r.image_id for r in fatb] == [
            i for i in ids if i.startswith("A")]

    def test_stratified_counts_use_ceil(self):
        # 10 records in one stratum at 0.6 -> exactly 6 train.
        records = [ManifestRecord(f"x{i}", f"x{i}.png", "A",
                                  (("Mass", _box(1, 1)),))
                   for i in range(10)]
        train, test = stratified_split(records, 0.6, seed=0)
        assert len(train) == 6 and len(test) == 4

    def test_ceil_rule_on_odd_sizes(self):
        records = [ManifestRecord(f"x{i}", f"x{i}.png", "A", ())
                   for i in range(5)]
        train, test = stratified_split(records, 0.5, seed=1)
        assert len(train) == 3 and len(test) == 2

    def test_split_is_a_partition(self, rng):
        records = _density_manifest({"A": 7, "B": 5, "C": 6, "D": 3})
        train, test = stratified_split(records, 0.6, seed=42)
        train_ids = {r.image_id for r in train}
        test_ids = {r.image_id for r in test}
        assert not (train_ids & test_ids)
        assert train_ids | test_ids == {r.image_id for r in records}

    def test_each_stratum_is_split_separately(self):
        # Two label signatures, 10 records each: both must go 6:4.
        with_mass = [ManifestRecord(f"m{i}", f"m{i}.png", "A",
                                    (("Mass", _box(1, 1)),))
                     for i in range(10)]
        empty = [ManifestRecord(f"e{i}", f"e{i}.png", "B", ())
                 for i in range(10)]
        train, test = stratified_split(with_mass + empty, 0.6, seed=9)
        for prefix in ("m", "e"):
            n_train = sum(r.image_id.startswith(prefix) for r in train)
            assert n_train == 6

    def test_deterministic_across_runs(self):
        records = _density_manifest({"A": 9, "C": 9})
        a = stratified_split(records, 0.6, seed=7)
        b = stratified_split(records, 0.6, seed=7)
        assert a == b

    def test_seed_changes_the_draw(self):
        records = _density_manifest({"A": 30})
        a_train, _ = stratified_split(records, 0.5, seed=0)
        b_train, _ = stratified_split(records, 0.5, seed=1)
        assert {r.image_id for r in a_train} != {r.image_id for r in b_train}

    def test_fraction_bounds(self):
        records = _density_manifest({"A": 4})
        with pytest.raises(ValueError):
            stratified_split(records, 0.0, seed=0)
        with pytest.raises(ValueError):
            stratified_split(records, 1.5, seed=0)
