"""Walkthrough of the annotation wire syntax.

Coded highlights are written inline: the highlighted substring is wrapped in
double asterisks and the codes follow immediately in a <sup> tag, separated
by semicolons. Spans index the plain text by Unicode code point.

Run: python3 demos/01_annotation_syntax.py
"""

from codealign import (
    Annotation,
    CodedSegment,
    SourceText,
    Span,
    parse_annotated,
    serialize_annotated,
    strip_annotations,
)

text = SourceText(
    id="interview-042",
    body="I travel quite often, or at least maybe four times a year.",
    context=("How often do you travel?",),
)

# A researcher highlights the opening clause and applies one code.
segments = [CodedSegment(Span(0, 20), ("travel frequency",))]
rendered = serialize_annotated(text, segments)
print("annotated:", rendered)

# Parsing recovers both the segments and the plain text.
parsed, plain = parse_annotated(text.body, rendered)
print("plain text matches body:", plain == text.body)
print("parsed spans:", [(s.span.start, s.span.end, s.codes) for s in parsed])

# Multiple codes on one highlight:
multi = serialize_annotated(text, [CodedSegment(Span(0, 20), ("travel frequency", "routine"))])
print("two codes:", multi)

# A "negative" annotation (nothing worth coding) renders as the body verbatim.
print("negative:", serialize_annotated(text, []) == text.body)

# Stripping removes all markup.
print("stripped:", strip_annotations(multi) == text.body)

# Annotation objects keep segments sorted and non-overlapping per annotator.
annotation = Annotation.from_segments(text.id, "human", parsed)
print("covered characters:", annotation.covered_chars())
print("pooled codes:", annotation.code_set())
