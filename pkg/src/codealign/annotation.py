"""Corpus and annotation data model, plus the markdown annotation wire syntax.

A highlight is written as ``**verbatim substring**<sup>code; other code</sup>``
with nothing between the closing ``**`` and the ``<sup>`` tag. Offsets are
Unicode code-point indices into the plain (marker-free) text. ``**`` and
``<sup>`` are reserved by the syntax: a text body containing them cannot be
round-tripped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import (
    DuplicateId,
    InvalidSpan,
    MalformedMarkup,
    MissingField,
    OverlapRejected,
    UnreadableFile,
)

HIGHLIGHT = "**"
SUP_OPEN = "<sup>"
SUP_CLOSE = "</sup>"

_LABEL_FORBIDDEN = (";", "<", ">")


@dataclass(frozen=True)
class SourceText:
    """One unit of analysis, with any preceding thread texts as context."""

    id: str
    body: str
    context: tuple[str, ...] = ()
    created_order: int = 0

    def __post_init__(self):
        if not self.id:
            raise ValueError("SourceText.id must be non-empty")
        if not self.body:
            raise ValueError(f"SourceText {self.id!r}: body must be non-empty")
        object.__setattr__(self, "context", tuple(self.context))


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character range [start, end) into a plain text."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvalidSpan(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end


def _validate_codes(codes: Sequence[str]) -> tuple[str, ...]:
    cleaned = tuple(c.strip() for c in codes)
    if not cleaned:
        raise ValueError("a coded segment needs at least one code")
    seen = set()
    for c in cleaned:
        if not c:
            raise ValueError("code labels must be non-empty")
        if any(ch in c for ch in _LABEL_FORBIDDEN):
            raise ValueError(f"code label {c!r} contains a reserved character (; < >)")
        if c in seen:
            raise ValueError(f"duplicate code label {c!r}")
        seen.add(c)
    return cleaned


@dataclass(frozen=True)
class CodedSegment:
    """A highlight span together with the codes applied to it."""

    span: Span
    codes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "codes", _validate_codes(self.codes))


def merge_overlapping_segments(segments: Iterable[CodedSegment]) -> list[CodedSegment]:
    """Sort segments and merge any that overlap, unioning their code lists.

    The wire format cannot express nesting or overlap, but reconstruction and
    manual edits can produce it; merging keeps every code while restoring the
    non-overlap invariant.
    """
    ordered = sorted(segments, key=lambda s: (s.span.start, s.span.end))
    merged: list[CodedSegment] = []
    for seg in ordered:
        if merged and merged[-1].span.overlaps(seg.span):
            prev = merged[-1]
            codes = list(prev.codes)
            codes.extend(c for c in seg.codes if c not in prev.codes)
            span = Span(prev.span.start, max(prev.span.end, seg.span.end))
            merged[-1] = CodedSegment(span, tuple(codes))
        else:
            merged.append(seg)
    return merged


ANNOTATOR_HUMAN = "human"
ANNOTATOR_LLM = "llm"


@dataclass(frozen=True)
class Annotation:
    """All coded segments one annotator placed on one text.

    Zero segments is a valid "negative" annotation: the annotator looked at
    the text and coded nothing.
    """

    text_id: str
    annotator: str
    segments: tuple[CodedSegment, ...] = ()

    def __post_init__(self):
        if self.annotator not in (ANNOTATOR_HUMAN, ANNOTATOR_LLM):
            raise ValueError(f"annotator must be 'human' or 'llm', got {self.annotator!r}")
        segs = tuple(self.segments)
        for prev, cur in zip(segs, segs[1:]):
            if cur.span.start < prev.span.start:
                raise OverlapRejected(f"{self.text_id}: segments must be sorted by start")
            if prev.span.overlaps(cur.span):
                raise OverlapRejected(
                    f"{self.text_id}: overlapping spans {prev.span} and {cur.span}"
                )
        object.__setattr__(self, "segments", segs)

    @classmethod
    def from_segments(
        cls,
        text_id: str,
        annotator: str,
        segments: Iterable[CodedSegment],
        normalize: bool = False,
    ) -> "Annotation":
        """Build an annotation, optionally merging overlapping segments first."""
        segs = list(segments)
        if normalize:
            segs = merge_overlapping_segments(segs)
        else:
            segs = sorted(segs, key=lambda s: (s.span.start, s.span.end))
        return cls(text_id=text_id, annotator=annotator, segments=tuple(segs))

    @property
    def is_positive(self) -> bool:
        return len(self.segments) > 0

    def covered_chars(self) -> int:
        return sum(len(s.span) for s in self.segments)

    def code_set(self) -> tuple[str, ...]:
        """Codes pooled over all segments, deduplicated, first-appearance order."""
        seen: list[str] = []
        for seg in self.segments:
            for c in seg.codes:
                if c not in seen:
                    seen.append(c)
        return tuple(seen)


class Codebook:
    """Ordered label -> description mapping, grown during inductive coding."""

    def __init__(self, entries: Iterable[tuple[str, str]] = ()):
        self._entries: dict[str, str] = {}
        for label, description in entries:
            self.add(label, description)

    def add(self, label: str, description: str) -> None:
        label = label.strip()
        if not label:
            raise ValueError("codebook labels must be non-empty")
        if label in self._entries:
            raise ValueError(f"duplicate codebook label {label!r}")
        self._entries[label] = description

    def __contains__(self, label: str) -> bool:
        return label in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def labels(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def description(self, label: str) -> str:
        return self._entries[label]

    def entries(self) -> tuple[tuple[str, str], ...]:
        return tuple(self._entries.items())

    def copy(self) -> "Codebook":
        return Codebook(self.entries())

    def __eq__(self, other) -> bool:
        return isinstance(other, Codebook) and self.entries() == other.entries()

    def __repr__(self) -> str:
        return f"Codebook({list(self._entries)!r})"


class ParsedAnnotation(NamedTuple):
    segments: list[CodedSegment]
    plain_text: str


def parse_annotated(original: str, annotated: str) -> ParsedAnnotation:
    """Parse ``**...**<sup>...</sup>`` markup into segments over the plain text.

    Returns the segments plus the plain text recovered by stripping the
    markers, so the caller can check it against ``original`` (the parser
    itself does not require them to match; reconstruction handles drift).
    """
    plain_parts: list[str] = []
    plain_len = 0
    segments: list[CodedSegment] = []
    i = 0
    n = len(annotated)
    while i < n:
        if annotated.startswith(HIGHLIGHT, i):
            close = annotated.find(HIGHLIGHT, i + 2)
            if close == -1:
                raise MalformedMarkup("unbalanced '**'")
            content = annotated[i + 2 : close]
            if not content:
                raise MalformedMarkup("empty highlight")
            sup_at = close + 2
            if not annotated.startswith(SUP_OPEN, sup_at):
                raise MalformedMarkup("'<sup>' must immediately follow the closing '**'")
            sup_end = annotated.find(SUP_CLOSE, sup_at + len(SUP_OPEN))
            if sup_end == -1:
                raise MalformedMarkup("unterminated '<sup>'")
            raw = annotated[sup_at + len(SUP_OPEN) : sup_end]
            codes: list[str] = []
            for part in raw.split(";"):
                code = part.strip()
                if not code:
                    raise MalformedMarkup(f"empty code in {raw!r}")
                if code not in codes:
                    codes.append(code)
            try:
                segment = CodedSegment(Span(plain_len, plain_len + len(content)), tuple(codes))
            except ValueError as exc:
                raise MalformedMarkup(str(exc)) from exc
            segments.append(segment)
            plain_parts.append(content)
            plain_len += len(content)
            i = sup_end + len(SUP_CLOSE)
        elif annotated.startswith(SUP_OPEN, i):
            raise MalformedMarkup("'<sup>' without a preceding highlight")
        else:
            plain_parts.append(annotated[i])
            plain_len += 1
            i += 1
    return ParsedAnnotation(segments, "".join(plain_parts))


def _check_segments_against(body: str, segments: Sequence[CodedSegment]) -> list[CodedSegment]:
    ordered = sorted(segments, key=lambda s: (s.span.start, s.span.end))
    for seg in ordered:
        if seg.span.end > len(body):
            raise InvalidSpan(f"span {seg.span} exceeds text length {len(body)}")
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.span.overlaps(cur.span):
            raise OverlapRejected(f"overlapping spans {prev.span} and {cur.span}")
    return ordered


def serialize_annotated(text: SourceText, segments: Sequence[CodedSegment]) -> str:
    """Render segments onto text.body in wire syntax; inverse of parse_annotated.

    A negative annotation (no segments) serializes as the body verbatim.
    """
    ordered = _check_segments_against(text.body, segments)
    out: list[str] = []
    pos = 0
    for seg in ordered:
        out.append(text.body[pos : seg.span.start])
        out.append(HIGHLIGHT)
        out.append(text.body[seg.span.start : seg.span.end])
        out.append(HIGHLIGHT)
        out.append(SUP_OPEN)
        out.append("; ".join(seg.codes))
        out.append(SUP_CLOSE)
        pos = seg.span.end
    out.append(text.body[pos:])
    return "".join(out)


def strip_annotations(annotated: str) -> str:
    """Remove all markup, returning the plain text; plain input is unchanged."""
    return parse_annotated("", annotated).plain_text


def _record_to_text(record: dict, position: int, path: str) -> SourceText:
    for key in ("id", "text"):
        if key not in record or record[key] is None or record[key] == "":
            raise MissingField(f"{path}: record {position} is missing {key!r}")
    context = record.get("context") or []
    if isinstance(context, str):
        context = [context]
    order = record.get("order")
    created_order = int(order) if order is not None else position
    return SourceText(
        id=str(record["id"]),
        body=str(record["text"]),
        context=tuple(str(c) for c in context),
        created_order=created_order,
    )


def import_corpus(path: str | Path, format: str = "jsonl") -> list[SourceText]:
    """Load a corpus file into SourceTexts ordered by `order` then file position.

    JSONL: one object per line with keys id, text, optional context (list of
    strings) and order (int). CSV: columns id, text, optional context (JSON
    array or a single string) and order.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc

    records: list[dict] = []
    if format == "jsonl":
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise UnreadableFile(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise UnreadableFile(f"{path}:{lineno}: expected an object per line")
            records.append(obj)
    elif format == "csv":
        try:
            rows = list(csv.DictReader(raw.splitlines(keepends=True)))
        except csv.Error as exc:
            raise UnreadableFile(f"{path}: invalid CSV: {exc}") from exc
        for row in rows:
            rec: dict = {"id": row.get("id"), "text": row.get("text")}
            ctx = row.get("context")
            if ctx:
                try:
                    parsed = json.loads(ctx)
                    rec["context"] = parsed if isinstance(parsed, list) else [str(parsed)]
                except json.JSONDecodeError:
                    rec["context"] = [ctx]
            if row.get("order"):
                rec["order"] = int(row["order"])
            records.append(rec)
    else:
        raise ValueError(f"unknown corpus format {format!r}")

    texts = [_record_to_text(rec, pos, str(path)) for pos, rec in enumerate(records)]
    seen: set[str] = set()
    for t in texts:
        if t.id in seen:
            raise DuplicateId(f"{path}: duplicate text id {t.id!r}")
        seen.add(t.id)
    # stable: explicit `order` wins, file position breaks ties
    texts = sorted(enumerate(texts), key=lambda pair: (pair[1].created_order, pair[0]))
    return [t for _, t in texts]
