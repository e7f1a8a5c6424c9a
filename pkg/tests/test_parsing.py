from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vidtext.labels import build_label_set
from vidtext.parsing import (
    ParseStatus,
    finalize_prediction,
    parse_function_call,
    parse_json_labels,
    parse_numbered_list,
    parse_response,
    prediction_from_record,
    prediction_to_record,
)
from vidtext.prompts import Dialect, build_prompt
from vidtext.reasoning import BackendProfile, build_request, keyword_backend

from conftest import CORPUS_LABEL_NAMES


def _names(prediction, labels):
    return [
        labels.display_name(e.label_id) if e.label_id is not None else None
        for e in prediction.entries
    ]


# ---------------------------------------------------------------------------
# finalize_prediction
# ---------------------------------------------------------------------------

def test_finalize_dedupes_matched(corpus_labels):
    pred = finalize_prediction(
        ["Archery", "archery", "Biking"], corpus_labels, "v", Dialect.JSON_TEXT
    )
    assert _names(pred, corpus_labels) == ["Archery", "Biking"]
    assert pred.parse_status is ParseStatus.PARSED


def test_finalize_truncates_to_five(corpus_labels):
    pred = finalize_prediction(
        CORPUS_LABEL_NAMES[:7], corpus_labels, "v", Dialect.JSON_TEXT
    )
    assert len(pred.entries) == 5


def test_finalize_keeps_unmatched_in_place(corpus_labels):
    pred = finalize_prediction(["FlyingCarpet"], corpus_labels, "v", Dialect.JSON_TEXT)
    assert len(pred.entries) == 1
    assert pred.entries[0].label_id is None
    assert pred.parse_status is ParseStatus.PARTIAL


def test_finalize_empty_is_failed(corpus_labels):
    pred = finalize_prediction([], corpus_labels, "v", Dialect.JSON_TEXT)
    assert pred.parse_status is ParseStatus.FAILED
    assert pred.entries == ()


@given(st.lists(st.text(max_size=25), max_size=12))
def test_finalize_invariants(candidates):
    labels = build_label_set(CORPUS_LABEL_NAMES)
    pred = finalize_prediction(candidates, labels, "v", Dialect.JSON_TEXT)
    assert len(pred.entries) <= 5
    matched = pred.matched_ids()
    assert len(matched) == len(set(matched))
    if pred.parse_status is ParseStatus.FAILED:
        assert pred.entries == ()
    if pred.parse_status is ParseStatus.PARSED:
        assert matched and len(matched) == len(pred.entries)


# ---------------------------------------------------------------------------
# dialect parsers (spec examples; the full corpus runs in test_acceptance)
# ---------------------------------------------------------------------------

def test_function_call_happy_path(corpus_labels):
    pred = parse_function_call('{"labels":["Archery","Biking"]}', corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["Archery", "Biking"]
    assert pred.parse_status is ParseStatus.PARSED


def test_function_call_empty_labels(corpus_labels):
    pred = parse_function_call('{"labels": []}', corpus_labels, "v")
    assert pred.parse_status is ParseStatus.FAILED


def test_function_call_partial(corpus_labels):
    pred = parse_function_call('{"labels":["Archery","FlyingCarpet"]}', corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["Archery", None]
    assert pred.parse_status is ParseStatus.PARTIAL


def test_json_labels_list(corpus_labels):
    pred = parse_json_labels('{"labels":["Archery","Biking","Drumming"]}', corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["Archery", "Biking", "Drumming"]


def test_json_rank_map(corpus_labels):
    pred = parse_json_labels('{"Biking": 2, "Archery": 1}', corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["Archery", "Biking"]


def test_json_extraction_from_prose(corpus_labels):
    pred = parse_json_labels(
        'Sure! Here is the JSON: ```{"labels":["Archery"]}```', corpus_labels, "v"
    )
    assert _names(pred, corpus_labels) == ["Archery"]


def test_numbered_basic(corpus_labels):
    pred = parse_numbered_list("1. playing guitar\n2. biking", corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["PlayingGuitar", "Biking"]


def test_numbered_no_lines_failed(corpus_labels):
    pred = parse_numbered_list("I think it is archery.", corpus_labels, "v")
    assert pred.parse_status is ParseStatus.FAILED


def test_numbered_sorted_by_leading_number(corpus_labels):
    pred = parse_numbered_list("2) Biking\n1) Archery", corpus_labels, "v")
    assert _names(pred, corpus_labels) == ["Archery", "Biking"]


@given(st.text(max_size=300))
def test_parsing_is_total(payload):
    labels = build_label_set(CORPUS_LABEL_NAMES)
    for fn in (parse_function_call, parse_json_labels, parse_numbered_list):
        prediction = fn(payload, labels, "v")
        assert len(prediction.entries) <= 5


@given(
    st.lists(
        st.sampled_from(CORPUS_LABEL_NAMES), min_size=1, max_size=8, unique=True
    ).flatmap(
        lambda names: st.permutations(range(len(names))).map(
            lambda ranks: dict(zip(names, ranks))
        )
    )
)
def test_rank_map_order_matches_brute_force(rank_map):
    labels = build_label_set(CORPUS_LABEL_NAMES)
    payload = json.dumps(rank_map)
    pred = parse_json_labels(payload, labels, "v")
    expected = sorted(rank_map, key=rank_map.get)[:5]
    assert _names(pred, labels) == expected


# ---------------------------------------------------------------------------
# round trip with the gateway mocks
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("dialect", list(Dialect))
def test_mock_roundtrip_recovers_intended_ranking(corpus_labels, dialect):
    profile = BackendProfile(name="m", base_url="mock://keyword", dialect=dialect)
    clues = "Frame captions:\nt=0.0s: a person doing archery then biking"
    spec = build_prompt(clues, corpus_labels, dialect)
    result = keyword_backend(build_request(spec, profile, video_id="v"))
    pred = parse_response(dialect, result.payload, result.tool_arguments, corpus_labels, "v")
    got = _names(pred, corpus_labels)
    assert got[0] == "Archery"
    assert got[1] == "Biking"
    assert len(got) == 5
    assert pred.parse_status is ParseStatus.PARSED


def test_function_call_without_tool_arguments_fails(corpus_labels):
    pred = parse_response(Dialect.FUNCTION_CALL, "some text", None, corpus_labels, "v")
    assert pred.parse_status is ParseStatus.FAILED


# ---------------------------------------------------------------------------
# record round trip
# ---------------------------------------------------------------------------

def test_prediction_record_roundtrip(corpus_labels):
    pred = finalize_prediction(
        ["Archery", "FlyingCarpet", "Biking"], corpus_labels, "v1", Dialect.NUMBERED_LIST
    )
    rec = prediction_to_record(pred, corpus_labels)
    assert rec["entries"][1]["label"] is None
    back = prediction_from_record(rec, corpus_labels)
    assert back.matched_ids() == pred.matched_ids()
    assert back.parse_status == pred.parse_status
    assert back.dialect == pred.dialect
