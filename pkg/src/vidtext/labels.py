"""Candidate class vocabulary: normalization, construction, exact matching.

Model output ("playing guitar", "playing-guitar") and catalog class names
("PlayingGuitar") must compare equal, so both sides go through the same
normalization before lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateNormalizedLabel

# Stripped in addition to Unicode whitespace: class lists and model output
# disagree on underscore/hyphen word joining.
_STRIPPED = frozenset("_-")


def normalize_label(raw: str) -> str:
    """Canonical comparison form: drop whitespace, "_" and "-", then case-fold.

    Idempotent; any text is accepted, including the empty string.
    """
    kept = [ch for ch in raw if not ch.isspace() and ch not in _STRIPPED]
    return "".join(kept).casefold()


@dataclass(frozen=True)
class LabelEntry:
    label_id: int
    display_name: str
    normalized: str


class LabelSet:
    """Immutable ordered vocabulary of class names.

    Entry ids are 0..n-1 in insertion order; normalized forms are unique.
    Safe to share across threads after construction.
    """

    def __init__(self, entries: tuple[LabelEntry, ...]):
        self.entries = entries
        self.index_by_normalized = {e.normalized: e.label_id for e in entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and self.entries == other.entries

    @property
    def display_names(self) -> list[str]:
        return [e.display_name for e in self.entries]

    def display_name(self, label_id: int) -> str:
        return self.entries[label_id].display_name


def build_label_set(names: list[str]) -> LabelSet:
    """Build a LabelSet from display names, rejecting normalized collisions.

    Raises:
        DuplicateNormalizedLabel: two names normalize identically, which
            would make matches ambiguous.
    """
    if not names:
        raise ValueError("label set needs at least one name")
    entries = []
    seen: dict[str, str] = {}
    for i, name in enumerate(names):
        norm = normalize_label(name)
        if norm in seen:
            raise DuplicateNormalizedLabel(
                f"{name!r} and {seen[norm]!r} both normalize to {norm!r}"
            )
        seen[norm] = name
        entries.append(LabelEntry(label_id=i, display_name=name, normalized=norm))
    return LabelSet(tuple(entries))


def match_label(candidate: str, label_set: LabelSet) -> int | None:
    """Return the label_id whose normalized form equals the candidate's, if any.

    Absence is a value, not an error: hallucinated names simply don't match.
    """
    return label_set.index_by_normalized.get(normalize_label(candidate))


def load_label_names(path: str | Path) -> list[str]:
    """Read display names from a text file, one per line.

    Blank lines and lines starting with "#" are ignored. UTF-8.
    """
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            names.append(stripped)
    return names


def load_label_set(path: str | Path) -> LabelSet:
    return build_label_set(load_label_names(path))
