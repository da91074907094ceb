"""The two alignment metrics, on vignettes like the ones the UI displays.

IoU compares WHERE two annotators highlighted (character overlap, 0..1,
higher is better). MHD compares WHAT the applied codes mean (embedding
distance between code sets, 0..2, lower is better). The two disagree in
instructive ways: same span with different codes scores IoU 1.0 but a
nonzero MHD; different spans carrying the same code score IoU 0.0 but
MHD 0.0.

Run: python3 demos/02_alignment_metrics.py
"""

from codealign import (
    Annotation,
    CodedSegment,
    MockEmbeddingProvider,
    SourceText,
    Span,
    alignment_report,
    iou,
    mhd,
    rank_texts,
)

provider = MockEmbeddingProvider()  # offline stand-in for a real embedding model


def highlight(text_id, annotator, *spans):
    return Annotation.from_segments(
        text_id, annotator, [CodedSegment(Span(a, b), (code,)) for a, b, code in spans]
    )


# Same highlight, different code: perfect focus, imperfect meaning.
human = highlight("r1", "human", (0, 70, "cultural trends"))
llm = highlight("r1", "llm", (0, 70, "improvements"))
print("row 1  IoU", iou(human, llm), " MHD", round(mhd(["cultural trends"], ["improvements"], provider), 2))

# Disjoint highlights, same code: opposite situation.
human = highlight("r3", "human", (0, 20, "travel frequency"))
llm = highlight("r3", "llm", (25, 58, "travel frequency"))
print("row 3  IoU", iou(human, llm), " MHD", mhd(["travel frequency"], ["travel frequency"], provider))

# Reports aggregate per-text rows and expose both inclusive and exclusive means.
texts = {
    "r1": SourceText(id="r1", body="x" * 70, created_order=0),
    "r3": SourceText(id="r3", body="y" * 60, created_order=1),
}
human_layer = {
    "r1": highlight("r1", "human", (0, 70, "cultural trends")),
    "r3": highlight("r3", "human", (0, 20, "travel frequency")),
}
llm_layer = {
    "r1": highlight("r1", "llm", (0, 70, "improvements")),
    "r3": highlight("r3", "llm", (25, 58, "travel frequency")),
}
report = alignment_report(human_layer, llm_layer, texts, ["r1", "r3"], provider)
print("mean IoU:", report.mean_iou)
print("worst-aligned first:", rank_texts(report, "iou_asc"))
print(report.to_csv())
