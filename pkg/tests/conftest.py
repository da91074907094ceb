"""Shared fixtures: seeded random generators for wire-safe texts and annotations."""

from __future__ import annotations

import string

import numpy as np
import pytest

from codealign.annotation import Annotation, CodedSegment, SourceText, Span

# bodies avoid the wire-reserved tokens ('**' cannot form, '<' excluded)
BODY_CHARS = string.ascii_letters + string.digits + " .,!?'-:()\n"
LABEL_CHARS = string.ascii_lowercase + string.digits + " -"


def random_body(rng: np.random.Generator, min_len: int = 1, max_len: int = 120) -> str:
    n = int(rng.integers(min_len, max_len + 1))
    return "".join(BODY_CHARS[i] for i in rng.integers(0, len(BODY_CHARS), n))


def random_label(rng: np.random.Generator) -> str:
    n = int(rng.integers(1, 12))
    label = "".join(LABEL_CHARS[i] for i in rng.integers(0, len(LABEL_CHARS), n)).strip()
    return label or "code"


def random_codes(rng: np.random.Generator, max_codes: int = 3) -> tuple[str, ...]:
    n = int(rng.integers(1, max_codes + 1))
    codes: list[str] = []
    while len(codes) < n:
        label = random_label(rng)
        if label not in codes:
            codes.append(label)
    return tuple(codes)


def random_segments(
    rng: np.random.Generator, body_len: int, max_segments: int = 4
) -> list[CodedSegment]:
    """Random sorted non-overlapping segments over a body of the given length."""
    n_target = int(rng.integers(0, max_segments + 1))
    cuts = sorted(int(c) for c in rng.integers(0, body_len + 1, size=2 * n_target))
    segments = []
    for lo, hi in zip(cuts[::2], cuts[1::2]):
        if hi > lo and (not segments or lo >= segments[-1].span.end):
            segments.append(CodedSegment(Span(lo, hi), random_codes(rng)))
    return segments


def random_fixture(
    rng: np.random.Generator, text_id: str = "t", order: int = 0
) -> tuple[SourceText, list[CodedSegment]]:
    body = random_body(rng, min_len=1)
    text = SourceText(id=text_id, body=body, created_order=order)
    return text, random_segments(rng, len(body))


def make_annotated_corpus(
    rng: np.random.Generator, n_texts: int, positive_fraction: float = 0.6
) -> tuple[list[SourceText], dict[str, Annotation]]:
    """A corpus where every text has a human annotation; a fixed fraction are
    positive (coded) and the rest negative."""
    texts: list[SourceText] = []
    layer: dict[str, Annotation] = {}
    for i in range(n_texts):
        body = random_body(rng, min_len=20, max_len=120)
        text = SourceText(id=f"t{i:03d}", body=body, created_order=i)
        if rng.random() < positive_fraction:
            segments = random_segments(rng, len(body), max_segments=3)
            if not segments:
                hi = max(1, len(body) // 2)
                segments = [CodedSegment(Span(0, hi), random_codes(rng))]
        else:
            segments = []
        texts.append(text)
        layer[text.id] = Annotation.from_segments(text.id, "human", segments)
    return texts, layer


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)


# -- acceptance criteria reporting -------------------------------------------

_acceptance_results: list[tuple[str, bool]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.passed))


def pytest_terminal_summary(terminalreporter):
    if _acceptance_results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, ok in _acceptance_results:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
