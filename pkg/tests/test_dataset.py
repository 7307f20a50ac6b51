from __future__ import annotations

import json
import logging
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfpip.dataset import (
    BoundingBox,
    DatasetManifest,
    EgoSpeed,
    FrameAnnotation,
    Label,
    PedestrianInstance,
    adapt_jaad,
    emit_manifest,
    filter_split,
    load_split_spec,
    manifest_from_dict,
    parse_manifest,
    write_manifest,
)
from bfpip.errors import (
    DuplicateInstanceId,
    MissingAnnotationField,
    MissingFile,
    NoEvaluableInstances,
    SchemaViolation,
    UnknownSplitVideo,
)
from helpers import make_instance, save_manifest, write_jaad_video


def _doc(*instances: dict) -> dict:
    return {"fps": 30, "source": "unit", "instances": list(instances)}


def _raw_instance(iid="A", split="test", w=10, event=60):
    return {
        "instance_id": iid,
        "video_id": "v1",
        "split": split,
        "event_frame": event,
        "ground_truth": "cross",
        "frame_dims": [100, 100],
        "frames": [{"frame_index": 15, "bbox": {"x": 1, "y": 2, "w": w, "h": 20}, "ego_speed": "stopped"}],
    }


def test_parse_manifest_single_instance(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(_raw_instance())))
    m = parse_manifest(p)
    assert len(m) == 1 and m.fps == 30
    inst = m.instances[0]
    assert inst.frames[0].bbox == BoundingBox(1, 2, 10, 20)
    assert inst.frames[0].ego_speed is EgoSpeed.STOPPED


def test_parse_manifest_duplicate_id(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(_raw_instance("A"), _raw_instance("A"))))
    with pytest.raises(DuplicateInstanceId):
        parse_manifest(p)


def test_parse_manifest_zero_width_box(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(_raw_instance(w=0))))
    with pytest.raises(SchemaViolation) as ei:
        parse_manifest(p)
    assert (ei.value.field, ei.value.reason) == ("bbox.w", "must be positive")


def test_parse_manifest_lists_every_violation(tmp_path):
    bad = _raw_instance(w=0, event=10)
    bad["split"] = "holdout"
    bad["frames"][0]["ego_speed"] = "warp"
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(bad)))
    with pytest.raises(SchemaViolation) as ei:
        parse_manifest(p)
    fields = {v[0] for v in ei.value.violations}
    assert {"bbox.w", "event_frame", "split", "ego_speed"} <= fields


def test_parse_manifest_box_outside_frame(tmp_path):
    raw = _raw_instance()
    raw["frames"][0]["bbox"] = {"x": 95, "y": 0, "w": 10, "h": 10}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(raw)))
    with pytest.raises(SchemaViolation) as ei:
        parse_manifest(p)
    assert ei.value.field == "bbox.x"


def test_parse_manifest_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        parse_manifest(tmp_path / "absent.json")


def test_ground_truth_required_for_test_split(tmp_path):
    raw = _raw_instance()
    raw["ground_truth"] = None
    with pytest.raises(SchemaViolation) as ei:
        manifest_from_dict(_doc(raw))
    assert ei.value.field == "ground_truth"
    raw["split"] = "train"
    assert manifest_from_dict(_doc(raw)).instances[0].ground_truth is None


def test_unknown_frame_fields_rejected():
    raw = _raw_instance()
    raw["frames"][0]["pose"] = []
    with pytest.raises(SchemaViolation):
        manifest_from_dict(_doc(raw))


def test_filter_split_examples():
    a = make_instance("A", split="test")
    b = make_instance("B", split="train")
    c = make_instance("C", split="test")
    m = DatasetManifest((a, b))
    assert [i.instance_id for i in filter_split(m, "test")] == ["A"]
    assert filter_split(DatasetManifest((b,)), "test") == []
    assert [i.instance_id for i in filter_split(DatasetManifest((c, a)), "test")] == ["A", "C"]


_speeds = st.sampled_from(list(EgoSpeed) + [None])
_coord = st.one_of(st.integers(0, 40), st.floats(0, 40, allow_nan=False).map(lambda v: round(v, 2)))


@st.composite
def _instances(draw, iid):
    event = draw(st.integers(45, 400))
    n = draw(st.integers(0, 20))
    start = draw(st.integers(0, 500))
    frames = []
    for k in range(n):
        box = None
        if draw(st.booleans()):
            box = BoundingBox(draw(_coord), draw(_coord), draw(st.integers(1, 50)), draw(st.integers(1, 50)))
        frames.append(FrameAnnotation(start + k, box, draw(_speeds)))
    split = draw(st.sampled_from(["train", "val", "test"]))
    gt = draw(st.sampled_from([Label.CROSS, Label.NOT_CROSS] + ([None] if split != "test" else [])))
    dims = draw(st.sampled_from([None, (100, 100), (1920, 1080)]))
    return PedestrianInstance(iid, draw(st.sampled_from(["v1", "v2"])), tuple(frames), event, gt, split, dims)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(*[_instances(f"i{k}") for k in range(n)])))
def test_manifest_round_trip(instances):
    manifest = DatasetManifest(tuple(instances), 30, "prop")
    again = manifest_from_dict(json.loads(emit_manifest(manifest)))
    assert again == manifest


def test_write_and_parse_round_trip(tmp_path):
    m = DatasetManifest((make_instance("x/1"), make_instance("x/2", ground_truth="not_cross")), 30, "s")
    assert parse_manifest(write_manifest(m, tmp_path / "m.json")) == m


# -- JAAD adapter -------------------------------------------------------------


def test_adapt_jaad_crossing_pedestrian(tmp_path):
    write_jaad_video(tmp_path, "video_0001", [("0_1_1b", 20, 150, 120, "pedestrian")])
    m = adapt_jaad(tmp_path, {"video_0001": "test"})
    assert len(m) == 1
    inst = m.instances[0]
    assert (inst.split, inst.ground_truth, inst.event_frame) == ("test", Label.CROSS, 120)
    assert inst.instance_id == "video_0001/0_1_1b"
    assert inst.frame_dims == (1920, 1080)
    fa = inst.frame(75)
    assert fa.bbox == BoundingBox(175, 300.5, 50, 149.75)
    assert fa.ego_speed is EgoSpeed.MOVING_SLOW
    assert inst.frame(76).ego_speed is EgoSpeed.DECELERATING


def test_adapt_jaad_non_crossing_and_attributes(tmp_path):
    write_jaad_video(
        tmp_path, "v2",
        [("0_2_1b", 0, 100, None, "pedestrian"), ("0_2_2b", 0, 100, 90, "pedestrian"), ("0_2_3", 0, 100, None, "ped")],
        crossing_points={"0_2_1b": 80},
    )
    m = adapt_jaad(tmp_path, {"v2": "val"})
    by_id = m.by_id()
    assert set(by_id) == {"v2/0_2_1b", "v2/0_2_2b"}  # non-behavioral 'ped' track skipped
    assert by_id["v2/0_2_1b"].event_frame == 80
    assert by_id["v2/0_2_1b"].ground_truth is Label.NOT_CROSS
    assert by_id["v2/0_2_2b"].ground_truth is Label.CROSS


def test_adapt_jaad_excludes_short_history(tmp_path, caplog):
    write_jaad_video(tmp_path, "v3", [("0_3_1b", 0, 60, 30, "pedestrian"), ("0_3_2b", 0, 80, 70, "pedestrian")])
    with caplog.at_level(logging.INFO, logger="bfpip.dataset"):
        m = adapt_jaad(tmp_path, {"v3": "test"})
    assert [i.instance_id for i in m.instances] == ["v3/0_3_2b"]
    assert "insufficient-history" in caplog.text and "v3/0_3_1b" in caplog.text


def test_adapt_jaad_missing_ego_speed(tmp_path):
    write_jaad_video(tmp_path, "v4", [("0_4_1b", 0, 100, 60, "pedestrian")], vehicle=False)
    with pytest.raises(MissingAnnotationField) as ei:
        adapt_jaad(tmp_path, {"v4": "test"})
    assert ei.value.name == "ego_speed"


def test_adapt_jaad_unknown_split_video(tmp_path):
    write_jaad_video(tmp_path, "v5", [("0_5_1b", 0, 100, 60, "pedestrian")])
    with pytest.raises(UnknownSplitVideo):
        adapt_jaad(tmp_path, {"v5": "test", "v_missing": "test"})


def test_adapt_jaad_no_evaluable(tmp_path):
    write_jaad_video(tmp_path, "v6", [("0_6_1b", 0, 40, 20, "pedestrian")])
    with pytest.raises(NoEvaluableInstances):
        adapt_jaad(tmp_path, {"v6": "test"})


def test_adapt_jaad_output_parses(tmp_path):
    write_jaad_video(tmp_path / "jaad", "a", [("1b", 10, 199, 150, "pedestrian"), ("2b", 50, 120, None, "pedestrian")])
    write_jaad_video(tmp_path / "jaad", "b", [("3b", 0, 199, 100, "pedestrian")])
    splits = tmp_path / "splits"
    splits.mkdir()
    (splits / "test.txt").write_text("a\n")
    (splits / "train.txt").write_text("b\n")
    assert load_split_spec(splits) == {"a": "test", "b": "train"}
    m = adapt_jaad(tmp_path / "jaad", splits)
    assert parse_manifest(write_manifest(m, tmp_path / "m.json")) == m
    for inst in m.instances:
        assert inst.evaluable


def test_save_manifest_helper(tmp_path):
    p = save_manifest(tmp_path / "m.json", [make_instance("A")])
    assert len(parse_manifest(p)) == 1
