from __future__ import annotations

import itertools
import random

import pytest

from bfpip.backends import Predictor, PredictorSpec, ResponseCache
from bfpip.clipper import ClipBuilder
from bfpip.dataset import Label
from bfpip.errors import InsufficientHistory, InvalidValue, MalformedResponse, TieWithEvenVotes
from bfpip.promptkit import ModalityConfig
from bfpip.protocol import (
    PredictionRecord,
    ProtocolConfig,
    RecordSink,
    Runner,
    aggregate_repeats,
    parse_response,
    read_records,
)
from helpers import label_json, make_frames, make_instance
from bfpip.backends.scripted import write_script

C, N = Label.CROSS, Label.NOT_CROSS


@pytest.mark.parametrize(
    "raw, label",
    [
        ('{"intention": "cross"}', C),
        ('{"intention": "not_cross"}', N),
        ('```json\n{"intention": "cross"}\n```', C),
        ('```\n{"intention":"not_cross"}\n```', N),
        ('  {"intention": "cross"}\n', C),
    ],
)
def test_parse_strict_accepts(raw, label):
    assert parse_response(raw) == (label, False)


@pytest.mark.parametrize(
    "raw",
    [
        "",
        "cross",
        "not_cross or cross",
        '{"intention": "maybe"}',
        '{"intention": "cross", "why": "not_cross"}',
        '{"Intention": "cross"}',
        '{"intention": "cross"} trailing',
        '{"intention": "cross"}\n{"intention": "not_cross"}',
        '["cross"]',
        '{"intention": "\\u0063ross"}',
    ],
)
def test_parse_strict_rejects(raw):
    with pytest.raises(MalformedResponse):
        parse_response(raw)


def test_parse_salvage_mode():
    assert parse_response("I think the answer is CROSS.", "salvage") == (C, True)
    assert parse_response('{"intention": "not_cross"}', "salvage") == (N, False)
    with pytest.raises(MalformedResponse):
        parse_response("cross or not_cross", "salvage")
    with pytest.raises(MalformedResponse):
        parse_response("crossing the street", "salvage")


def test_malformed_response_keeps_excerpt():
    with pytest.raises(MalformedResponse) as ei:
        parse_response("x" * 1000)
    assert len(ei.value.excerpt) < 1000


def test_aggregate_examples():
    assert aggregate_repeats([C, C, N, C, N]) == (C, 0.6, False)
    assert aggregate_repeats([N] * 5) == (N, 0.0, True)
    assert aggregate_repeats([C] * 5) == (C, 1.0, True)
    assert aggregate_repeats([C, N]).label == N
    assert aggregate_repeats([C, N], "cross").label == C
    with pytest.raises(TieWithEvenVotes):
        aggregate_repeats([C, N], "error")


def test_aggregate_all_five_vote_patterns():
    for pattern in itertools.product((C, N), repeat=5):
        agg = aggregate_repeats(pattern)
        k = pattern.count(C)
        assert agg.label == (C if k >= 3 else N)
        assert agg.score == k / 5
        assert agg.unanimous == (k in (0, 5))


def test_aggregate_permutation_invariant():
    rng = random.Random(7)
    for _ in range(200):
        labels = [rng.choice((C, N)) for _ in range(rng.choice((1, 3, 5, 7)))]
        shuffled = labels[:]
        rng.shuffle(shuffled)
        assert aggregate_repeats(labels) == aggregate_repeats(shuffled)


def test_protocol_config_validation():
    assert ProtocolConfig().deviations == []
    assert ProtocolConfig(repeats=3).deviations
    for bad in ({"repeats": 4}, {"repeats": 0}, {"parse_mode": "lenient"}, {"tie_break": "coin"}):
        with pytest.raises(InvalidValue):
            ProtocolConfig(**bad)


def _runner(tmp_path, rows, instances, pcfg=None, cache=True):
    make_frames(tmp_path / "frames", "vid_a")
    script = write_script(tmp_path / "script.jsonl", rows)
    spec = PredictorSpec(kind="scripted", model_id="scripted", script=str(script))
    predictor = Predictor(spec, ResponseCache(tmp_path / "cache") if cache else None)
    clips = ClipBuilder(tmp_path / "clips", frames_root=tmp_path / "frames")
    return Runner(predictor, clips, pcfg=pcfg or ProtocolConfig(), max_concurrency=2)


def test_run_instance_unanimous(tmp_path):
    inst = make_instance("vid_a/1")
    rows = [("vid_a/1", "AV+S", r, label_json("cross")) for r in range(5)]
    rec = _runner(tmp_path, rows, [inst]).run_instance(inst, ModalityConfig.parse("AV+S"))
    assert rec.aggregated == C and rec.score == 1.0 and rec.unanimous and rec.status == "ok"
    assert len(rec.repeats) == 5


def test_run_instance_majority(tmp_path):
    inst = make_instance("vid_a/1")
    votes = ["cross", "not_cross", "cross", "not_cross", "cross"]
    rows = [("vid_a/1", "UV", r, label_json(v)) for r, v in enumerate(votes)]
    rec = _runner(tmp_path, rows, [inst]).run_instance(inst, ModalityConfig.parse("UV"))
    assert rec.aggregated == C and rec.score == 0.6 and not rec.unanimous


def test_run_instance_partial_parse_failures(tmp_path):
    inst = make_instance("vid_a/1")
    texts = ["garbage", label_json("not_cross"), "", label_json("not_cross"), label_json("cross")]
    rows = [("vid_a/1", "UV", r, t) for r, t in enumerate(texts)]
    rec = _runner(tmp_path, rows, [inst]).run_instance(inst, ModalityConfig.parse("UV"))
    assert rec.parse_failures == 2
    assert rec.aggregated == N and rec.score == pytest.approx(1 / 3)


def test_run_instance_all_malformed_is_failed_record(tmp_path):
    inst = make_instance("vid_a/1")
    rows = [("vid_a/1", "UV", r, "no idea") for r in range(5)]
    rec = _runner(tmp_path, rows, [inst]).run_instance(inst, ModalityConfig.parse("UV"))
    assert rec.status == "evaluation_failed" and rec.aggregated is None and rec.score is None


def test_run_instance_error_carries_identity(tmp_path):
    inst = make_instance("vid_a/1", event_frame=45)
    short = inst.__class__(inst.instance_id, inst.video_id, inst.frames, 40, inst.ground_truth, inst.split, inst.frame_dims)
    with pytest.raises(InsufficientHistory) as ei:
        _runner(tmp_path, [], [short]).run_instance(short, ModalityConfig.parse("UV"))
    assert ei.value.context["instance_id"] == "vid_a/1" and ei.value.context["config"] == "UV"


def test_run_sorted_and_round_trips(tmp_path):
    insts = [make_instance(f"vid_a/{i}") for i in (3, 1, 2)]
    configs = [ModalityConfig.parse("AV"), ModalityConfig.parse("UV")]
    rows = [(i.instance_id, c.label, r, label_json("cross")) for i in insts for c in configs for r in range(5)]
    sink = RecordSink(tmp_path / "run" / "records.jsonl")
    records = _runner(tmp_path, rows, insts).run(insts, configs, sink)
    assert [(r.config.label, r.instance_id) for r in records] == [
        ("UV", "vid_a/1"), ("UV", "vid_a/2"), ("UV", "vid_a/3"),
        ("AV", "vid_a/1"), ("AV", "vid_a/2"), ("AV", "vid_a/3"),
    ]
    assert not sink.partial.exists()
    assert read_records(sink.path) == records
    assert PredictionRecord.from_dict(records[0].to_dict()) == records[0]
