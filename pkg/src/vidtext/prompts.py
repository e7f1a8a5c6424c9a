"""Prompt construction: render descriptor bundles into backend-ready prompts.

All functions here are pure; equal inputs give byte-identical output,
including the content fingerprint, so prompts double as resume keys.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass

from .errors import EmptyBundle
from .labels import LabelSet
from .perception import DescriptorBundle


class Dialect(enum.Enum):
    """How a backend returns its ranked labels."""

    FUNCTION_CALL = "function_call"
    JSON_TEXT = "json_text"
    NUMBERED_LIST = "numbered_list"


class ContextLevel(enum.IntEnum):
    """Which descriptor kinds the prompt includes; each level adds one kind."""

    CAPTIONS = 1
    CAPTIONS_SPEECH = 2
    CAPTIONS_SPEECH_AUDIO = 3

    @classmethod
    def parse(cls, name: str) -> ContextLevel:
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown context level {name!r}; expected one of "
                f"{[lvl.name.lower() for lvl in cls]}"
            ) from None


@dataclass(frozen=True)
class PromptSpec:
    """Fully rendered request content for one dialect."""

    dialect: Dialect
    system_text: str
    user_text: str
    label_enum: tuple[str, ...] | None
    temperature: float
    fingerprint: str


def render_clues(bundle: DescriptorBundle, level: ContextLevel) -> str:
    """Assemble the textual clues for one video in fixed section order.

    Sections: frame captions, then (level permitting) the speech transcript,
    then the audio tags. Empty sections are omitted entirely; text for a
    lower level is always a prefix of the text for a higher level.

    Raises:
        EmptyBundle: no section would be emitted at this level.
    """
    lines: list[str] = []
    if bundle.captions:
        lines.append("Frame captions:")
        for cap in bundle.captions:
            lines.append(f"t={cap.time_s:.1f}s: {cap.text}")
    if level >= ContextLevel.CAPTIONS_SPEECH and bundle.transcript:
        lines.append("Speech transcript:")
        lines.append(" ".join(seg.text.strip() for seg in bundle.transcript))
    if level >= ContextLevel.CAPTIONS_SPEECH_AUDIO and bundle.audio_tags:
        lines.append("Audio tags:")
        lines.append(", ".join(f"{t.tag} ({t.score:.2f})" for t in bundle.audio_tags))
    if not lines:
        raise EmptyBundle(f"video {bundle.video_id}: nothing to describe at level {level.name}")
    return "\n".join(lines)


_SYSTEM_BASE = "You are an assistant that identifies the action in a video from textual clues."

_ASK_JSON = (
    "Please return the 5 labels that apply the most to the video in a json format, "
    "from the most likely to the least likely."
)
_ASK_NUMBERED = (
    "Please return the 5 labels that apply the most to the video as a numbered list, "
    "from the most likely to the least likely."
)

# The keyword mock backend recovers the label list and the clue text from
# the rendered prompt, so these markers are shared with vidtext.reasoning.
LABEL_LIST_MARKER = " and these action recognition labels: "
SYSTEM_LABEL_MARKER = " The possible action recognition labels are: "
SYSTEM_LABEL_SUFFIX = ". Answer with a numbered list of the 5 best labels."


def build_prompt(
    clues: str,
    labels: LabelSet,
    dialect: Dialect,
    temperature: float = 0.0,
) -> PromptSpec:
    """Render clues plus the vocabulary into a dialect-specific PromptSpec.

    Each display name appears exactly once in the prompt materials: inline in
    the user text (JSON_TEXT), in the schema enum (FUNCTION_CALL), or in the
    system text (NUMBERED_LIST).
    """
    if not clues:
        raise ValueError("clues must be non-empty")
    names = ", ".join(labels.display_names)
    label_enum: tuple[str, ...] | None = None
    system_text = _SYSTEM_BASE

    if dialect is Dialect.JSON_TEXT:
        user_text = f"Given this {clues}{LABEL_LIST_MARKER}{names} {_ASK_JSON}"
    elif dialect is Dialect.FUNCTION_CALL:
        label_enum = tuple(labels.display_names)
        user_text = f"Given this {clues} {_ASK_JSON}"
    elif dialect is Dialect.NUMBERED_LIST:
        system_text = f"{_SYSTEM_BASE}{SYSTEM_LABEL_MARKER}{names}{SYSTEM_LABEL_SUFFIX}"
        user_text = f"Given this {clues} {_ASK_NUMBERED}"
    else:
        raise ValueError(f"unknown dialect {dialect!r}")

    fingerprint = _fingerprint(dialect, system_text, user_text, label_enum, temperature)
    return PromptSpec(
        dialect=dialect,
        system_text=system_text,
        user_text=user_text,
        label_enum=label_enum,
        temperature=temperature,
        fingerprint=fingerprint,
    )


def _fingerprint(
    dialect: Dialect,
    system_text: str,
    user_text: str,
    label_enum: tuple[str, ...] | None,
    temperature: float,
) -> str:
    blob = json.dumps(
        {
            "dialect": dialect.value,
            "system": system_text,
            "user": user_text,
            "enum": list(label_enum) if label_enum is not None else None,
            "temperature": temperature,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
