"""The full iteration workflow against the project service.

A project is a directory: one canonical JSON document, an append-only change
log, and per-run logs. The same service backs the HTTP API and the browser
workbench; this script drives it directly:

  annotate -> pick examples -> run -> inspect worst-aligned -> refine -> re-run

Run: python3 demos/06_project_workflow.py
"""

import tempfile
from pathlib import Path

from codealign import (
    Annotation,
    CodedSegment,
    MockChatProvider,
    MockEmbeddingProvider,
    SourceText,
    Span,
    serialize_annotated,
)
from codealign.project import ProjectService

texts = [
    SourceText(id=f"msg{i}", body=body, created_order=i)
    for i, body in enumerate(
        [
            "The checkout flow kept timing out on me.",
            "Great selection, terrible search filters.",
            "I gave up after the app crashed twice.",
            "Shipping was fast and the box looked nice.",
            "Why does every page ask me to log in again?",
            "No complaints really, it just works.",
        ]
    )
]

def span_of(text: SourceText, substring: str) -> Span:
    start = text.body.index(substring)
    return Span(start, start + len(substring))


human = {
    "msg0": [CodedSegment(span_of(texts[0], "checkout flow kept timing out"), ("reliability",))],
    "msg1": [CodedSegment(span_of(texts[1], "terrible search filters"), ("search experience",))],
    "msg2": [CodedSegment(span_of(texts[2], "app crashed twice"), ("reliability",))],
    "msg3": [],
    "msg4": [CodedSegment(span_of(texts[4], texts[4].body), ("authentication friction",))],
    "msg5": [],
}

# A scripted backend that mostly agrees with the researcher but misreads msg4.
scripted = {
    texts[0].body: "The **checkout flow kept timing out**<sup>reliability</sup> on me.",
    texts[1].body: "Great selection, **terrible search filters**<sup>search experience</sup>.",
    texts[2].body: "I gave up after the **app crashed twice**<sup>reliability</sup>.",
    texts[4].body: "**Why does every page ask me to log in again?**<sup>page design</sup>",
}

workdir = Path(tempfile.mkdtemp(prefix="codealign-demo-"))
service = ProjectService(
    workdir,
    chat_provider=MockChatProvider(scripted),
    embedding_provider=MockEmbeddingProvider(),
)

pid = service.create_project(texts, project_id="feedback-study")
for tid, segments in human.items():
    service.upsert_human_annotation(pid, tid, segments)

# Curate: two examples teach the model, the rest become the validation set.
service.set_examples(pid, ["msg0", "msg3"])
service.set_instructions(pid, ["- Code complaints, not praise."])

run_id = service.start_run(pid, scope="validation")
service.wait_for_run(pid, run_id)

report = service.get_report(pid, run_id, sort="iou_asc")
print(f"run {run_id}: mean IoU {report['report']['mean_iou']:.3f}, "
      f"mean MHD {report['report']['mean_mhd']:.3f}")
print("\nworst-aligned texts first:")
for row in report["texts"]:
    m = row["metrics"]
    mhd_str = "n/a" if m["mhd"] is None else f"{m['mhd']:.3f}"
    print(f"  {row['text_id']}: IoU {m['iou']:.3f}  MHD {mhd_str}")
    print(f"    human: {row['human_markdown']}")
    print(f"    llm:   {row['llm_markdown']}")

# The researcher reacts: msg4 disagreed, so they promote it to an example and
# iterate. Progress shows up in the iteration history.
service.set_examples(pid, ["msg0", "msg3", "msg4"])
second = service.start_run(pid, scope="validation")
service.wait_for_run(pid, second)

history = service.get_state(pid).iteration_history
print("\niteration history (mean IoU per run):")
for entry in history:
    print(f"  {entry['run_id']}: {entry['mean_iou']:.3f} with {len(entry['example_ids'])} examples")

print(f"\nproject directory: {workdir / pid}")
for p in sorted((workdir / pid).rglob("*")):
    print("  ", p.relative_to(workdir))
