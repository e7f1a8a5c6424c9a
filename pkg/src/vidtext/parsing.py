"""Turn raw backend payloads into ranked predictions.

Parsing is total: no payload raises. Whatever the backend sent maps to a
RankedPrediction, and anything that cannot be matched to the vocabulary
simply never scores as a hit.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

from .labels import LabelSet, match_label
from .prompts import Dialect

MAX_ENTRIES = 5


class ParseStatus(enum.Enum):
    PARSED = "parsed"      # at least one candidate matched the vocabulary
    PARTIAL = "partial"    # candidates found but some could not be matched
    FAILED = "failed"      # no candidates could be extracted at all


@dataclass(frozen=True)
class PredictionEntry:
    raw_text: str
    label_id: int | None


@dataclass(frozen=True)
class RankedPrediction:
    """Up to 5 ordered guesses for one video, most likely first."""

    video_id: str
    entries: tuple[PredictionEntry, ...]
    parse_status: ParseStatus
    dialect: Dialect

    def matched_ids(self) -> list[int]:
        return [e.label_id for e in self.entries if e.label_id is not None]


def finalize_prediction(
    candidates: list[str],
    labels: LabelSet,
    video_id: str,
    dialect: Dialect,
) -> RankedPrediction:
    """Match, dedupe, and truncate an ordered candidate list.

    Duplicate matched labels keep their first occurrence. Unmatched
    candidates stay in place: they occupy rank positions but can never equal
    the ground truth, which mirrors the decision to count unparseable
    guesses as incorrect rather than promote lower ones.
    """
    entries: list[PredictionEntry] = []
    seen: set[int] = set()
    for raw in candidates:
        label_id = match_label(raw, labels)
        if label_id is not None:
            if label_id in seen:
                continue
            seen.add(label_id)
        entries.append(PredictionEntry(raw_text=raw, label_id=label_id))
    entries = entries[:MAX_ENTRIES]

    if not entries:
        status = ParseStatus.FAILED
    elif not seen:
        # candidates exist but none matched; scoring treats this like a
        # failed parse since no rank can ever hit
        status = ParseStatus.PARTIAL
    elif any(e.label_id is None for e in entries):
        status = ParseStatus.PARTIAL
    else:
        status = ParseStatus.PARSED
    return RankedPrediction(
        video_id=video_id, entries=tuple(entries), parse_status=status, dialect=dialect
    )


def _failed(video_id: str, dialect: Dialect) -> RankedPrediction:
    return RankedPrediction(
        video_id=video_id, entries=(), parse_status=ParseStatus.FAILED, dialect=dialect
    )


def _stringify(item) -> str:
    return item if isinstance(item, str) else json.dumps(item)


def parse_function_call(tool_arguments: str, labels: LabelSet, video_id: str) -> RankedPrediction:
    """Parse function-call arguments: a JSON object with a "labels" array."""
    dialect = Dialect.FUNCTION_CALL
    try:
        obj = json.loads(tool_arguments or "")
    except ValueError:
        return _failed(video_id, dialect)
    if not isinstance(obj, dict) or not isinstance(obj.get("labels"), list):
        return _failed(video_id, dialect)
    candidates = [_stringify(item) for item in obj["labels"]]
    return finalize_prediction(candidates, labels, video_id, dialect)


_decoder = json.JSONDecoder()


def _first_json_object(text: str) -> dict | None:
    """First balanced-brace substring that parses as a JSON object, if any."""
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = _decoder.raw_decode(text, match.start())
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def parse_json_labels(payload: str, labels: LabelSet, video_id: str) -> RankedPrediction:
    """Parse free text containing a JSON object, fenced or inline.

    Accepts either {"labels": [...]} as an ordered list, or an object whose
    keys are class names and values are numeric ranks (rank 1 = most likely,
    ties broken by order of appearance).
    """
    dialect = Dialect.JSON_TEXT
    obj = _first_json_object(payload)
    if obj is None:
        return _failed(video_id, dialect)
    if "labels" in obj:
        if not isinstance(obj["labels"], list):
            return _failed(video_id, dialect)
        candidates = [_stringify(item) for item in obj["labels"]]
        return finalize_prediction(candidates, labels, video_id, dialect)
    values = list(obj.values())
    if values and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        ranked = sorted(obj.keys(), key=lambda k: obj[k])  # stable: ties keep key order
        return finalize_prediction(ranked, labels, video_id, dialect)
    return _failed(video_id, dialect)


_NUMBERED_LINE = re.compile(r"^\s*(\d+)\s*[.):-]\s*(.*?)\s*$")


def parse_numbered_list(payload: str, labels: LabelSet, video_id: str) -> RankedPrediction:
    """Parse lines beginning with a number; separators ".", ")", ":", "-".

    Candidates are ordered by their leading number ascending, ties by line
    order; numbers above 5 are accepted and truncated after ordering.
    """
    dialect = Dialect.NUMBERED_LIST
    numbered: list[tuple[int, str]] = []
    for line in payload.splitlines():
        m = _NUMBERED_LINE.match(line)
        if m:
            numbered.append((int(m.group(1)), m.group(2)))
    if not numbered:
        return _failed(video_id, dialect)
    numbered.sort(key=lambda pair: pair[0])  # stable: ties keep line order
    return finalize_prediction([text for _, text in numbered], labels, video_id, dialect)


def parse_response(
    dialect: Dialect,
    content: str,
    tool_arguments: str | None,
    labels: LabelSet,
    video_id: str,
) -> RankedPrediction:
    """Dispatch to the dialect-specific parser.

    A FUNCTION_CALL response without a function call is unparseable by
    definition and becomes FAILED.
    """
    if dialect is Dialect.FUNCTION_CALL:
        if tool_arguments is None:
            return _failed(video_id, dialect)
        return parse_function_call(tool_arguments, labels, video_id)
    if dialect is Dialect.JSON_TEXT:
        return parse_json_labels(content, labels, video_id)
    return parse_numbered_list(content, labels, video_id)


# ---------------------------------------------------------------------------
# JSONL serialization
# ---------------------------------------------------------------------------

def prediction_to_record(prediction: RankedPrediction, labels: LabelSet) -> dict:
    return {
        "video_id": prediction.video_id,
        "entries": [
            {
                "raw_text": e.raw_text,
                "label": labels.display_name(e.label_id) if e.label_id is not None else None,
            }
            for e in prediction.entries
        ],
        "parse_status": prediction.parse_status.value,
        "dialect": prediction.dialect.value,
    }


def prediction_from_record(rec: dict, labels: LabelSet) -> RankedPrediction:
    entries = tuple(
        PredictionEntry(
            raw_text=e["raw_text"],
            label_id=match_label(e["label"], labels) if e.get("label") else None,
        )
        for e in rec["entries"]
    )
    return RankedPrediction(
        video_id=rec["video_id"],
        entries=entries,
        parse_status=ParseStatus(rec["parse_status"]),
        dialect=Dialect(rec["dialect"]),
    )
