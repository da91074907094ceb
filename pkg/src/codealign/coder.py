"""Sequential LLM inductive coding.

Texts are processed strictly in order: the prompt for each text carries the
instructions, the codebook accumulated so far, the few-shot examples, and the
target; each newly generated code gets an auto-generated description and is
appended to the codebook before the next text is coded.

Because the model sometimes "fixes" typos despite being told not to, every
output is verified verbatim against the original and, when it drifts, the
highlight spans are projected back onto the original text through a
character-level minimal-edit alignment.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .annotation import (
    ANNOTATOR_LLM,
    Annotation,
    Codebook,
    CodedSegment,
    SourceText,
    Span,
    merge_overlapping_segments,
    parse_annotated,
    serialize_annotated,
)
from .clustering import kmeans
from .embeddings import EmbeddingProvider, _retry
from .errors import (
    HallucinatedOutput,
    MalformedMarkup,
    PromptTooLong,
    ProviderUnavailable,
    RunAborted,
    TooFewCodes,
)

HALLUCINATION_THRESHOLD = 0.3
DEFAULT_TOKEN_BUDGET = 128_000

DEFAULT_BASE_INSTRUCTIONS = """\
You are an expert qualitative researcher. You are given a text to code inductively. Please carry out the following task:
- Respond by repeating the original text, but highlighting the coded statements by surrounding the statements with double asterisks, as if they were bolded text in a Markdown document.
- Include the associated code(s) immediately after the statement, separated by a semicolon and enclosed in <sup></sup> tags, as if they were superscript text in a Markdown document.
- Preserve exact formatting of the original text. Do not correct typos or remove unnecessary spaces."""

CODEBOOK_INTRO = (
    'Some examples of codes in the format "{code}: {description}". '
    "Please create new codes when needed:"
)

EXAMPLES_INTRO = (
    "Below, I first give you examples of the output you should produce given an "
    "example input. After that, I give you the actual input to process. The input "
    "may come from a thread of texts, and any preceding texts are added as context "
    "(labelled CONTEXT). Your task is to code only the last text (labelled TEXT)."
)

ACTUAL_INPUT_HEADER = "ACTUAL INPUT:"

DESCRIBE_CODE_PREFIX = "Write a single-sentence description of the qualitative code "
NAME_THEME_PREFIX = "Name the overarching theme of the following qualitative codes"


def estimate_tokens(text: str) -> int:
    """Crude context-budget estimator: one token per four characters."""
    return len(text) // 4


@dataclass(frozen=True)
class PromptSpec:
    """Everything that goes into one coding prompt."""

    codebook: Codebook
    examples: tuple[tuple[SourceText, Annotation], ...] = ()
    custom_instructions: tuple[str, ...] = ()
    base_instructions: str = DEFAULT_BASE_INSTRUCTIONS
    target: SourceText | None = None


def _input_block(text: SourceText) -> str:
    lines = [f"CONTEXT: {c}" for c in text.context]
    lines.append(f"TEXT: {text.body}")
    return "\n".join(lines)


def build_prompt(
    spec: PromptSpec,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    token_estimator: Callable[[str], int] = estimate_tokens,
) -> str:
    """Render the coding prompt: instructions, custom instructions, codebook,
    few-shot examples, then the target under ACTUAL INPUT. Deterministic."""
    if spec.target is None:
        raise ValueError("PromptSpec.target is required to build a prompt")
    sections = [spec.base_instructions]
    if spec.custom_instructions:
        sections.append("\n".join(spec.custom_instructions))
    codebook_section = CODEBOOK_INTRO
    if len(spec.codebook):
        entries = "\n".join(f"- {label}: {desc}" for label, desc in spec.codebook.entries())
        codebook_section += "\n\n" + entries
    sections.append(codebook_section)
    sections.append(EXAMPLES_INTRO)
    for text, ann in spec.examples:
        rendered = serialize_annotated(text, ann.segments)
        sections.append(f"EXAMPLE INPUT:\n{_input_block(text)}\nEXAMPLE OUTPUT: {rendered}")
    sections.append(f"{ACTUAL_INPUT_HEADER}\n\n{_input_block(spec.target)}")
    prompt = "\n\n".join(sections)
    estimate = token_estimator(prompt)
    if estimate > token_budget:
        raise PromptTooLong(f"estimated {estimate} tokens exceeds budget {token_budget}")
    return prompt


# --- character-level edit alignment -----------------------------------------

def _edit_matrix(a: str, b: str) -> np.ndarray:
    """Full Levenshtein DP table between a (rows) and b (columns).

    Rows are computed vectorized; horizontal moves are folded in with a
    running-minimum pass (dp[i][j] = min over k<=j of cand[k] + (j-k))."""
    n, m = len(a), len(b)
    b_cp = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    a_cp = np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32)
    dp = np.empty((n + 1, m + 1), dtype=np.int32)
    col = np.arange(m + 1, dtype=np.int32)
    dp[0] = col
    for i in range(1, n + 1):
        cand = np.empty(m + 1, dtype=np.int32)
        cand[0] = dp[i - 1, 0] + 1
        if m:
            cost = (b_cp != a_cp[i - 1]).astype(np.int32)
            cand[1:] = np.minimum(dp[i - 1, :-1] + cost, dp[i - 1, 1:] + 1)
        dp[i] = np.minimum.accumulate(cand - col) + col
    return dp


def _align(a: str, b: str) -> tuple[int, list[int]]:
    """Edit distance and per-character alignment of a onto b.

    Returns (distance, mapping) where mapping[i] is the index in b that a[i]
    aligns to (match or substitution), or -1 when a[i] has no counterpart.
    Traceback prefers aligned pairs over indels, so the mapping is maximal."""
    dp = _edit_matrix(a, b)
    mapping = [-1] * len(a)
    i, j = len(a), len(b)
    while i > 0 or j > 0:
        if (
            i > 0
            and j > 0
            and dp[i, j] == dp[i - 1, j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
        ):
            mapping[i - 1] = j - 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            i -= 1
        else:
            j -= 1
    return int(dp[len(a), len(b)]), mapping


def edit_distance(a: str, b: str) -> int:
    return int(_edit_matrix(a, b)[len(a), len(b)])


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return edit_distance(a, b) / longest if longest else 0.0


@dataclass(frozen=True)
class Reconstruction:
    segments: tuple[CodedSegment, ...]
    edit_ratio: float
    reconstructed: bool
    dropped_spans: int


def reconstruct(
    original: str,
    model_output: str,
    threshold: float = HALLUCINATION_THRESHOLD,
) -> Reconstruction:
    """Parse model output and, if its text drifted from the original, project
    the spans back through a minimal-edit alignment.

    Span starts snap forward and span ends snap backward past unaligned
    characters, so reconstructed spans never cover characters the model did
    not highlight; spans left empty by the projection are dropped."""
    segments, plain = parse_annotated(original, model_output)
    if plain == original:
        return Reconstruction(tuple(segments), 0.0, False, 0)
    distance, mapping = _align(plain, original)
    ratio = distance / max(len(plain), len(original))
    if ratio > threshold:
        raise HallucinatedOutput(
            f"normalized edit distance {ratio:.3f} exceeds {threshold}: "
            "the model rewrote the text instead of annotating it"
        )
    projected: list[CodedSegment] = []
    dropped = 0
    for seg in segments:
        aligned = [mapping[i] for i in range(seg.span.start, seg.span.end) if mapping[i] >= 0]
        if not aligned:
            dropped += 1
            continue
        projected.append(CodedSegment(Span(aligned[0], aligned[-1] + 1), seg.codes))
    return Reconstruction(tuple(projected), ratio, True, dropped)


def verify_and_reconstruct(
    original: str,
    model_output: str,
    threshold: float = HALLUCINATION_THRESHOLD,
) -> list[CodedSegment]:
    """Segments of model_output expressed as spans into the original text."""
    return list(reconstruct(original, model_output, threshold).segments)


# --- chat backends -----------------------------------------------------------

class ChatProvider(Protocol):
    provider_id: str

    def complete(self, prompt: str, system: str | None = None) -> str:
        ...


def extract_target_body(prompt: str) -> str:
    """Pull the target text body out of a coding prompt (mock backends only)."""
    _, sep, tail = prompt.rpartition(f"{ACTUAL_INPUT_HEADER}\n\n")
    if not sep:
        raise ValueError("prompt has no ACTUAL INPUT section")
    marker = "TEXT: "
    if tail.startswith(marker):
        return tail[len(marker):]
    idx = tail.find("\n" + marker)
    if idx == -1:
        raise ValueError("prompt has no TEXT line in its ACTUAL INPUT section")
    return tail[idx + 1 + len(marker):]


def _theme_members(prompt: str) -> list[str]:
    return [line[2:] for line in prompt.splitlines() if line.startswith("- ")]


class MockChatProvider:
    """Offline chat backend.

    Coding prompts are answered from a scripted body -> annotated-output map
    (unscripted bodies echo back unannotated, i.e. a negative annotation).
    Code-description prompts return "Code: {label}" and theme prompts return
    the first member labels joined, keeping every downstream artifact exactly
    reproducible without a network.
    """

    provider_id = "mock-chat"
    temperature = 0.0

    def __init__(self, scripted: Mapping[str, str] | None = None, delay: float = 0.0):
        self.scripted = dict(scripted or {})
        self.delay = delay

    def _annotate(self, body: str, prompt: str) -> str:
        return self.scripted.get(body, body)

    def complete(self, prompt: str, system: str | None = None) -> str:
        if self.delay:
            time.sleep(self.delay)
        if prompt.startswith(DESCRIBE_CODE_PREFIX):
            start = prompt.index('"') + 1
            end = prompt.index('".', start)
            return f"Code: {prompt[start:end]}"
        if prompt.startswith(NAME_THEME_PREFIX):
            return " / ".join(_theme_members(prompt)[:3])
        return self._annotate(extract_target_body(prompt), prompt)


def _stable_unit_float(text: str) -> float:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class FidelityMockChatProvider(MockChatProvider):
    """Mock whose coding fidelity grows with the number of few-shot examples.

    For each target the backend either reproduces the reference annotation or
    echoes the body unannotated. The choice is a fixed per-body draw compared
    against n/(n+pivot) where n is the example count in the prompt, so the
    set of reproduced targets grows monotonically with n -- which makes
    learning-curve behavior testable offline.
    """

    provider_id = "mock-chat-fidelity"

    def __init__(self, reference: Mapping[str, str], pivot: float = 4.0):
        super().__init__(scripted=reference)
        self.pivot = pivot

    def _annotate(self, body: str, prompt: str) -> str:
        n = prompt.count("EXAMPLE INPUT:")
        if _stable_unit_float(body) < n / (n + self.pivot):
            return self.scripted.get(body, body)
        return body


class HttpChatProvider:
    """Adapter for an OpenAI-style /chat/completions endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "CHAT_API_KEY",
        temperature: float = 0.0,
        retries: int = 5,
        backoff_base: float = 1.0,
        timeout: float = 120.0,
    ):
        import httpx
        import os

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.retries = retries
        self.backoff_base = backoff_base
        self.provider_id = f"{model}@{self.base_url}"
        self._client = httpx.Client(timeout=timeout)
        self._os = os

    def complete(self, prompt: str, system: str | None = None) -> str:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})

        def call():
            headers = {"Content-Type": "application/json"}
            key = self._os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            resp = self._client.post(
                f"{self.base_url}/chat/completions",
                json={"model": self.model, "messages": messages, "temperature": self.temperature},
                headers=headers,
            )
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]

        return _retry(call, self.retries, self.backoff_base)


# --- code descriptions and themes ---------------------------------------------

def describe_code(
    label: str,
    exemplar_segments: Sequence[str],
    provider: ChatProvider,
) -> tuple[str, bool]:
    """Single-sentence description for a new code; falls back to the literal
    label on provider failure. Returns (description, degraded)."""
    if not label:
        raise ValueError("label must be non-empty")
    parts = [f'{DESCRIBE_CODE_PREFIX}"{label}".']
    if exemplar_segments:
        parts.append("It was applied to the following excerpts:")
        parts.extend(f"- {seg}" for seg in exemplar_segments)
    parts.append("Respond with the description only.")
    prompt = "\n".join(parts)
    try:
        description = provider.complete(prompt).strip()
        if not description:
            raise ValueError("empty description")
        return description, False
    except Exception:  # noqa: BLE001 -- degrade rather than fail the run
        return label, True


def generate_code_description(
    label: str,
    exemplar_segments: Sequence[str],
    provider: ChatProvider,
) -> str:
    return describe_code(label, exemplar_segments, provider)[0]


@dataclass(frozen=True)
class Theme:
    label: str
    codes: tuple[str, ...]


def group_codes_into_themes(
    codebook: Codebook,
    chat_provider: ChatProvider,
    embedding_provider: EmbeddingProvider,
    k: int,
    seed: int = 0,
) -> list[Theme]:
    """Cluster the codebook into k groups on code embeddings and name each
    cluster with a short theme label. Every code lands in exactly one theme."""
    labels = codebook.labels()
    if len(labels) < k:
        raise TooFewCodes(f"{len(labels)} codes cannot form {k} themes")
    vectors = embedding_provider.embed(list(labels))
    result = kmeans(vectors, k, seed)
    themes: list[Theme] = []
    for cluster in range(k):
        members = tuple(labels[i] for i in result.members(cluster))
        if not members:
            continue
        prompt = "\n".join(
            [f"{NAME_THEME_PREFIX}:"]
            + [f"- {m}" for m in members]
            + ["Respond with a short theme label only."]
        )
        try:
            name = chat_provider.complete(prompt).strip() or " / ".join(members[:3])
        except Exception:  # noqa: BLE001
            name = " / ".join(members[:3])
        themes.append(Theme(label=name, codes=members))
    return themes


# --- the sequential coding loop -----------------------------------------------

OUTCOME_OK = "ok"
OUTCOME_RECONSTRUCTED = "reconstructed"
OUTCOME_FAILED = "failed"


@dataclass(frozen=True)
class TextOutcome:
    text_id: str
    status: str
    edit_ratio: float
    note: str = ""


@dataclass
class CodingRun:
    """Everything one sequential coding pass produced."""

    example_ids: tuple[str, ...]
    instruction_snapshot: tuple[str, ...]
    outcomes: list[TextOutcome] = field(default_factory=list)
    llm_layer: dict[str, Annotation] = field(default_factory=dict)
    codebook: Codebook = field(default_factory=Codebook)
    log_records: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def _prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def code_inductively(
    targets: Sequence[SourceText],
    spec: PromptSpec,
    provider: ChatProvider,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    hallucination_threshold: float = HALLUCINATION_THRESHOLD,
) -> CodingRun:
    """Code targets strictly in order, growing the codebook as new codes appear.

    Per-text parse or hallucination failures are recorded (with an empty
    annotation) and the run continues; only an unreachable provider aborts.
    With a fixed mock provider the result is a pure function of the inputs.
    """
    codebook = spec.codebook.copy()
    run = CodingRun(
        example_ids=tuple(t.id for t, _ in spec.examples),
        instruction_snapshot=tuple(spec.custom_instructions),
        codebook=codebook,
        provenance={
            "provider": provider.provider_id,
            "temperature": getattr(provider, "temperature", 0.0),
        },
    )
    for text in targets:
        prompt = build_prompt(replace(spec, target=text, codebook=codebook), token_budget)
        try:
            raw = provider.complete(prompt)
        except ProviderUnavailable as exc:
            raise RunAborted(f"provider failed on text {text.id!r}: {exc}") from exc

        try:
            recon = reconstruct(text.body, raw, hallucination_threshold)
        except (MalformedMarkup, HallucinatedOutput) as exc:
            ratio = normalized_edit_distance(raw, text.body)
            run.outcomes.append(TextOutcome(text.id, OUTCOME_FAILED, ratio, str(exc)))
            run.llm_layer[text.id] = Annotation(text.id, ANNOTATOR_LLM)
            run.log_records.append(
                {
                    "text_id": text.id,
                    "prompt_hash": _prompt_hash(prompt),
                    "raw_output": raw,
                    "outcome": OUTCOME_FAILED,
                    "edit_ratio": ratio,
                }
            )
            continue

        annotation = Annotation.from_segments(text.id, ANNOTATOR_LLM, recon.segments, normalize=True)
        run.llm_layer[text.id] = annotation
        if recon.dropped_spans:
            run.warnings.append(
                f"{text.id}: dropped {recon.dropped_spans} span(s) that vanished in reconstruction"
            )
        status = OUTCOME_RECONSTRUCTED if recon.reconstructed else OUTCOME_OK
        run.outcomes.append(TextOutcome(text.id, status, recon.edit_ratio))
        run.log_records.append(
            {
                "text_id": text.id,
                "prompt_hash": _prompt_hash(prompt),
                "raw_output": raw,
                "outcome": status,
                "edit_ratio": recon.edit_ratio,
            }
        )
        for segment in annotation.segments:
            for code in segment.codes:
                if code not in codebook:
                    exemplars = [
                        text.body[s.span.start : s.span.end]
                        for s in annotation.segments
                        if code in s.codes
                    ]
                    description, degraded = describe_code(code, exemplars, provider)
                    codebook.add(code, description)
                    if degraded:
                        run.warnings.append(
                            f"{text.id}: description for {code!r} degraded to the literal label"
                        )
    return run
