import io
import json
from pathlib import Path

import pytest
from hypothesis import given, settings

from eventground.events import ActorId, Action, ObjectId, make_tuple
from eventground.simulator import builtin, generate
from eventground.streams import (
    FormatError,
    GroundTruthFile,
    InvalidEvent,
    MalformedLine,
    NonMonotoneTime,
    ObjectEntry,
    ObjectRegistry,
    UnknownScenario,
    UnknownVerb,
    dumps_events,
    dumps_ground_truth,
    parse_events,
    parse_frame_stream,
    parse_ground_truth,
    parse_registry,
    read_frames,
    write_predictions,
)

import strategies as S

FRAME0 = '{"frame":0,"time":0.0,"actions":{"person_1":"idle"},"person_crops":{"person_1":"p1_f0.png"}}'
META = '{"meta":{"scenario":"sorting","constellation":"2P+R"}}'
WORKED = [
    '{"actor":"person_2","action":"place_down","object":"object_3","relation":{"rho":"in","target":"object_2"},'
    '"robot_interaction":false,"time":12.0}',
    '{"actor":"person_1","action":"hand_over","object":"object_1","relation":{"rho":"to","target":"robot_1"},'
    '"robot_interaction":true,"time":4.0}',
    '{"actor":"robot_1","action":"place_down","object":"object_1","relation":{"rho":"in","target":"object_2"},'
    '"robot_interaction":false,"time":8.0}',
]


def test_single_frame():
    [f] = parse_frame_stream(FRAME0 + "\n")
    assert f.frame_index == 0 and f.time == 0.0
    assert f.actions == {ActorId("person", 1): Action.IDLE}
    assert f.person_crops == {ActorId("person", 1): "p1_f0.png"}
    assert f.scene_crop is None


def test_time_must_increase():
    second = FRAME0.replace('"frame":0', '"frame":1').replace('"time":0.0', '"time":0.5')
    first = FRAME0.replace('"time":0.0', '"time":1.0')
    with pytest.raises(NonMonotoneTime) as err:
        parse_frame_stream(first + "\n" + second + "\n")
    assert err.value.line_no == 2
    assert "2" in str(err.value)


def test_unknown_verb_in_frame():
    with pytest.raises(UnknownVerb) as err:
        parse_frame_stream(FRAME0.replace('"idle"', '"juggle"'))
    assert err.value.line_no == 1


@pytest.mark.parametrize("line", [
    "{not json",
    "[1, 2]",
    '{"frame":0,"time":0.0,"actions":{}}',
    '{"frame":-1,"time":0.0,"actions":{},"person_crops":{}}',
    '{"frame":0,"time":-1.0,"actions":{},"person_crops":{}}',
    '{"frame":0.5,"time":0.0,"actions":{},"person_crops":{}}',
    '{"frame":0,"time":"0","actions":{},"person_crops":{}}',
    '{"frame":0,"time":0.0,"actions":{"object_1":"idle"},"person_crops":{}}',
    '{"frame":0,"time":NaN,"actions":{},"person_crops":{}}',
])
def test_frame_schema_deviations_rejected(line):
    with pytest.raises(FormatError) as err:
        parse_frame_stream(line)
    assert err.value.line_no == 1


def test_blank_line_rejected():
    with pytest.raises(MalformedLine):
        parse_frame_stream(FRAME0 + "\n\n")


def test_extra_fields_ignored():
    [f] = parse_frame_stream(FRAME0[:-1] + ',"future":1}')
    assert f.frame_index == 0


def test_worked_example_ground_truth():
    gt = parse_ground_truth("\n".join([META] + WORKED) + "\n")
    assert [t.time for t in gt.tuples] == [4.0, 8.0, 12.0]
    assert gt.tuples == list(builtin("sorting_example_s3").events)
    assert (gt.scenario, gt.constellation) == ("sorting", "2P+R")


def test_empty_ground_truth():
    gt = parse_ground_truth(META + "\n")
    assert gt.tuples == [] and gt.scenario == "sorting"


def test_ground_truth_requires_meta():
    with pytest.raises(MalformedLine):
        parse_ground_truth(WORKED[0])
    with pytest.raises(UnknownScenario):
        parse_ground_truth('{"meta":{"scenario":"cooking","constellation":"1P"}}')


def test_meta_only_on_first_line():
    with pytest.raises(MalformedLine):
        parse_events(WORKED[0] + "\n" + META + "\n")


def test_missing_action_field():
    rec = json.loads(WORKED[0])
    del rec["action"]
    with pytest.raises(MalformedLine) as err:
        parse_ground_truth(META + "\n" + json.dumps(rec))
    assert err.value.line_no == 2


def test_invalid_event_keeps_cause():
    rec = json.loads(WORKED[0])
    rec["action"] = "idle"
    with pytest.raises(InvalidEvent) as err:
        parse_events(json.dumps(rec))
    assert err.value.cause is not None


def test_write_predictions_counts_bytes():
    assert write_predictions([], io.StringIO()) == 0
    t = make_tuple("person_1", "grasp", "object_1", None, False, 1.0)
    sink = io.StringIO()
    n = write_predictions([t], sink)
    assert n == len(sink.getvalue().encode()) and sink.getvalue().count("\n") == 1
    assert parse_events(sink.getvalue()) == [t]
    raw = io.BytesIO()
    assert write_predictions([t], raw) == n


def test_write_predictions_orders_worked_example():
    events = list(builtin("sorting_example_s3").events)
    sink = io.StringIO()
    write_predictions(list(reversed(events)), sink)
    lines = sink.getvalue().splitlines()
    assert len(lines) == 3
    assert [json.loads(x)["time"] for x in lines] == [4.0, 8.0, 12.0]
    assert json.loads(lines[0])["action"] == "handover"


def test_canonical_field_order():
    t = make_tuple("person_1", "place_down", "object_1", ("in", "object_2"), False, 2.5)
    assert dumps_events([t]) == ('{"actor":"person_1","action":"place_down","object":"object_1",'
                                 '"relation":{"rho":"in","target":"object_2"},"robot_interaction":false,'
                                 '"time":2.5}\n')


def test_registry_rules():
    reg = parse_registry('{"objects":[{"id":"object_2","crop":"a.png","first_seen":0.5,"label_hint":"apple"}]}')
    assert reg.entries == [ObjectEntry(ObjectId(2), "a.png", 0.5, "apple")]
    with pytest.raises(FormatError):
        parse_registry('{"objects":[{"id":"object_1","crop":"a","first_seen":0},'
                       '{"id":"object_1","crop":"b","first_seen":0}]}')
    with pytest.raises(FormatError):
        parse_registry('{"objects":[{"id":"person_1","crop":"a","first_seen":0}]}')
    with pytest.raises(FormatError):
        parse_registry('{"things":[]}')
    with pytest.raises(MalformedLine):
        ObjectRegistry([ObjectEntry(ObjectId(1), "a", -1.0)])


def test_sources(tmp_path):
    p = tmp_path / "f.frames.jsonl"
    p.write_text(FRAME0 + "\n")
    assert read_frames(p) == parse_frame_stream(Path(p)) == parse_frame_stream(io.StringIO(FRAME0))
    assert parse_frame_stream([FRAME0]) == read_frames(p)


def test_ground_truth_serialization_has_header():
    gt = GroundTruthFile([], "pouring", "1P+R")
    assert dumps_ground_truth(gt) == '{"meta":{"scenario":"pouring","constellation":"1P+R"}}\n'


@settings(max_examples=25, deadline=None)
@given(S.scripts())
def test_simulated_streams_always_parse(script):
    from eventground.streams import dumps_frames, dumps_registry
    gen = generate(script)
    assert parse_frame_stream(dumps_frames(gen.frames)) == gen.frames
    assert parse_registry(dumps_registry(gen.registry)) == gen.registry
