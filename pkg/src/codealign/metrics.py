"""Alignment metrics between a human and an LLM annotation layer.

Two views of agreement: character-level IoU over highlight spans (did both
annotators mark the same text?) and Modified Hausdorff Distance over code
embeddings (do the applied codes mean the same thing?). MHD between point
sets A and B is max(mean_a min_b d(a,b), mean_b min_a d(a,b)) with cosine
distance, so it lives in [0, 2].
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .annotation import Annotation, SourceText
from .embeddings import EmbeddingProvider, cosine_distance
from .errors import MissingAnnotation, TextMismatch

FLAG_BOTH_UNCODED = "both_uncoded"
FLAG_ONE_SIDED = "one_sided"

SORT_KEYS = ("iou_asc", "iou_desc", "mhd_asc", "mhd_desc", "order")


def iou(human: Annotation, llm: Annotation) -> float:
    """Character-level intersection over union of the two highlight sets.

    1.0 when both annotators covered exactly the same characters, 0.0 when
    their highlights are disjoint. Two empty annotations agree perfectly:
    both decided the text contains nothing salient, so the score is 1.0.
    """
    if human.text_id != llm.text_id:
        raise TextMismatch(f"annotations reference {human.text_id!r} vs {llm.text_id!r}")
    a = [(s.span.start, s.span.end) for s in human.segments]
    b = [(s.span.start, s.span.end) for s in llm.segments]
    total_a = sum(e - s for s, e in a)
    total_b = sum(e - s for s, e in b)
    if total_a == 0 and total_b == 0:
        return 1.0
    # segments within a layer are already sorted and disjoint; sweep both
    inter = 0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            inter += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    union = total_a + total_b - inter
    return inter / union


def mhd(
    human_codes: Sequence[str],
    llm_codes: Sequence[str],
    provider: EmbeddingProvider,
) -> float:
    """Modified Hausdorff Distance between the two code sets in embedding space.

    Duplicates and ordering do not matter (point sets). Both sets empty is
    perfect agreement (0.0); exactly one empty is maximal disagreement (2.0).
    """
    a_codes = list(dict.fromkeys(human_codes))
    b_codes = list(dict.fromkeys(llm_codes))
    if not a_codes and not b_codes:
        return 0.0
    if not a_codes or not b_codes:
        return 2.0
    vectors = provider.embed(a_codes + b_codes)
    a = np.stack([v.unit() for v in vectors[: len(a_codes)]])
    b = np.stack([v.unit() for v in vectors[len(a_codes) :]])
    # half squared unit-vector distance == cosine distance, exactly 0 on equality
    dist = np.minimum(0.5 * np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2), 2.0)
    forward = float(dist.min(axis=1).mean())
    backward = float(dist.min(axis=0).mean())
    return max(forward, backward)


@dataclass(frozen=True)
class TextAlignment:
    """Per-text metric row."""

    text_id: str
    iou: float
    mhd: float | None
    human_char_count: int
    llm_char_count: int
    created_order: int = 0
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "text_id": self.text_id,
            "iou": self.iou,
            "mhd": self.mhd,
            "human_char_count": self.human_char_count,
            "llm_char_count": self.llm_char_count,
            "created_order": self.created_order,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TextAlignment":
        return cls(
            text_id=obj["text_id"],
            iou=obj["iou"],
            mhd=obj["mhd"],
            human_char_count=obj["human_char_count"],
            llm_char_count=obj["llm_char_count"],
            created_order=obj.get("created_order", 0),
            flags=tuple(obj.get("flags", ())),
        )


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class AlignmentReport:
    """Per-text metrics plus aggregate means.

    mean_iou / mean_mhd average over every row. Because it is debatable
    whether texts both sides left uncoded should count as (trivially perfect)
    agreement, the exclusive_* means drop those rows; n_both_uncoded and
    n_one_sided report how many rows were affected.
    """

    per_text: tuple[TextAlignment, ...]
    mean_iou: float | None
    mean_mhd: float | None
    exclusive_mean_iou: float | None
    exclusive_mean_mhd: float | None
    n_both_uncoded: int
    n_one_sided: int

    @classmethod
    def from_rows(cls, rows: Sequence[TextAlignment]) -> "AlignmentReport":
        ious = [r.iou for r in rows]
        mhds = [r.mhd for r in rows if r.mhd is not None]
        nontrivial = [r for r in rows if FLAG_BOTH_UNCODED not in r.flags]
        return cls(
            per_text=tuple(rows),
            mean_iou=_mean(ious),
            mean_mhd=_mean(mhds),
            exclusive_mean_iou=_mean([r.iou for r in nontrivial]),
            exclusive_mean_mhd=_mean([r.mhd for r in nontrivial if r.mhd is not None]),
            n_both_uncoded=sum(1 for r in rows if FLAG_BOTH_UNCODED in r.flags),
            n_one_sided=sum(1 for r in rows if FLAG_ONE_SIDED in r.flags),
        )

    def to_json(self) -> dict:
        return {
            "per_text": [r.to_json() for r in self.per_text],
            "mean_iou": self.mean_iou,
            "mean_mhd": self.mean_mhd,
            "exclusive_mean_iou": self.exclusive_mean_iou,
            "exclusive_mean_mhd": self.exclusive_mean_mhd,
            "n_both_uncoded": self.n_both_uncoded,
            "n_one_sided": self.n_one_sided,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AlignmentReport":
        return cls(
            per_text=tuple(TextAlignment.from_json(r) for r in obj["per_text"]),
            mean_iou=obj["mean_iou"],
            mean_mhd=obj["mean_mhd"],
            exclusive_mean_iou=obj["exclusive_mean_iou"],
            exclusive_mean_mhd=obj["exclusive_mean_mhd"],
            n_both_uncoded=obj["n_both_uncoded"],
            n_one_sided=obj["n_one_sided"],
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["text_id", "iou", "mhd", "flags"])
        for r in self.per_text:
            writer.writerow(
                [r.text_id, repr(r.iou), "" if r.mhd is None else repr(r.mhd), "|".join(r.flags)]
            )
        return buf.getvalue()


def text_alignment(
    text: SourceText,
    human: Annotation,
    llm: Annotation,
    provider: EmbeddingProvider,
) -> TextAlignment:
    flags: list[str] = []
    h_codes = human.code_set()
    l_codes = llm.code_set()
    if not h_codes and not l_codes:
        flags.append(FLAG_BOTH_UNCODED)
    elif not h_codes or not l_codes:
        flags.append(FLAG_ONE_SIDED)
    return TextAlignment(
        text_id=text.id,
        iou=iou(human, llm),
        mhd=mhd(h_codes, l_codes, provider),
        human_char_count=human.covered_chars(),
        llm_char_count=llm.covered_chars(),
        created_order=text.created_order,
        flags=tuple(flags),
    )


def alignment_report(
    human_layer: Mapping[str, Annotation],
    llm_layer: Mapping[str, Annotation],
    texts: Mapping[str, SourceText],
    text_ids: Sequence[str],
    provider: EmbeddingProvider,
) -> AlignmentReport:
    """Per-text metrics and means over the given text ids.

    Deterministic given the inputs and provider; every id must be covered by
    both layers and present in the corpus.
    """
    rows: list[TextAlignment] = []
    for tid in text_ids:
        if tid not in texts:
            raise MissingAnnotation(f"unknown text id {tid!r}")
        if tid not in human_layer:
            raise MissingAnnotation(f"text {tid!r} lacks a human annotation")
        if tid not in llm_layer:
            raise MissingAnnotation(f"text {tid!r} lacks an LLM annotation")
        rows.append(text_alignment(texts[tid], human_layer[tid], llm_layer[tid], provider))
    return AlignmentReport.from_rows(rows)


def rank_texts(report: AlignmentReport, by: str = "iou_asc") -> list[str]:
    """Order text ids by a metric; stable, with ties broken by created_order.

    Rows with an undefined metric sort after all defined values.
    """
    if by not in SORT_KEYS:
        raise ValueError(f"unknown sort key {by!r}; expected one of {SORT_KEYS}")
    rows = list(report.per_text)
    if by == "order":
        rows.sort(key=lambda r: r.created_order)
        return [r.text_id for r in rows]
    metric = by.split("_")[0]
    descending = by.endswith("_desc")

    def key(r: TextAlignment):
        value = getattr(r, metric)
        missing = value is None
        if missing:
            value = 0.0
        return (missing, -value if descending else value, r.created_order)

    rows.sort(key=key)
    return [r.text_id for r in rows]
