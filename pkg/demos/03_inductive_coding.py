"""The sequential inductive coding loop, end to end with a scripted backend.

Texts are coded one at a time. Each prompt carries the instructions, the
codebook accumulated so far, the few-shot examples, and the target text; new
codes get auto-generated descriptions and join the codebook for the next
text. Outputs that drift from the original (the model "fixing" a typo) are
repaired by projecting the spans back through an edit alignment.

Run: python3 demos/03_inductive_coding.py
"""

from dataclasses import replace

from codealign import (
    Annotation,
    Codebook,
    CodedSegment,
    MockChatProvider,
    MockEmbeddingProvider,
    PromptSpec,
    SourceText,
    Span,
    build_prompt,
    code_inductively,
    group_codes_into_themes,
    verify_and_reconstruct,
)

example_text = SourceText(
    id="ex1",
    body="I travel quite often, or at least maybe four times a year.",
    context=("How often do you travel?",),
    created_order=0,
)
example_annotation = Annotation.from_segments(
    "ex1", "human", [CodedSegment(Span(0, 20), ("travel frequency",))]
)

targets = [
    SourceText(id="t1", body="We mostly book last minute deals.", created_order=1),
    SourceText(id="t2", body="Honestly teh whole trip was chaos.", created_order=2),
    SourceText(id="t3", body="No comment.", created_order=3),
]

# A scripted offline backend standing in for a chat model. Note the second
# response "corrects" the typo 'teh' -> 'the', which real models sometimes do
# despite instructions.
backend = MockChatProvider(
    {
        targets[0].body: "We mostly book **last minute deals**<sup>booking habits</sup>.",
        targets[1].body: "Honestly **the whole trip was chaos**<sup>trip problems</sup>.",
    }
)

spec = PromptSpec(
    codebook=Codebook(),
    examples=((example_text, example_annotation),),
    custom_instructions=("- Do not code interviewer questions.",),
)

print("--- the prompt sent for the first text ---")
print(build_prompt(replace(spec, target=targets[0])))
print()

run = code_inductively(targets, spec, backend)

print("--- outcomes ---")
for outcome in run.outcomes:
    print(f"{outcome.text_id}: {outcome.status} (edit ratio {outcome.edit_ratio:.3f})")

print("\n--- grown codebook ---")
for label, description in run.codebook.entries():
    print(f"- {label}: {description}")

print("\n--- reconstructed spans land on the ORIGINAL text ---")
annotation = run.llm_layer["t2"]
for s in annotation.segments:
    print(repr(targets[1].body[s.span.start : s.span.end]), s.codes)

# Reconstruction is also available standalone:
spans = verify_and_reconstruct("teh game", "**the game**<sup>x</sup>")
print("\nstandalone repair:", spans)

# Once a codebook exists, codes can be grouped into broader themes.
themes = group_codes_into_themes(
    run.codebook, backend, MockEmbeddingProvider(), k=2, seed=0
)
print("\n--- themes ---")
for theme in themes:
    print(f"{theme.label}: {list(theme.codes)}")
