import json

import numpy as np
import pytest

from codealign.annotation import Annotation, CodedSegment, SourceText, Span
from codealign.embeddings import EmbeddingVector, MockEmbeddingProvider, cosine_distance
from codealign.errors import MissingAnnotation, TextMismatch
from codealign.metrics import (
    AlignmentReport,
    alignment_report,
    iou,
    mhd,
    rank_texts,
    text_alignment,
)

from conftest import random_codes, random_segments


def seg(start, end, *codes):
    return CodedSegment(Span(start, end), tuple(codes))


def ann(text_id, annotator, *segments):
    return Annotation.from_segments(text_id, annotator, segments)


def iou_oracle(human: Annotation, llm: Annotation) -> float:
    """Brute force over explicit character index sets."""
    h = set()
    for s in human.segments:
        h.update(range(s.span.start, s.span.end))
    l = set()
    for s in llm.segments:
        l.update(range(s.span.start, s.span.end))
    if not h and not l:
        return 1.0
    return len(h & l) / len(h | l)


def mhd_oracle(a_codes, b_codes, provider) -> float:
    """Double loop over every embedding pair."""
    a_codes = list(dict.fromkeys(a_codes))
    b_codes = list(dict.fromkeys(b_codes))
    if not a_codes and not b_codes:
        return 0.0
    if not a_codes or not b_codes:
        return 2.0
    va = provider.embed(a_codes)
    vb = provider.embed(b_codes)
    fwd = sum(min(cosine_distance(x, y) for y in vb) for x in va) / len(va)
    bwd = sum(min(cosine_distance(y, x) for x in va) for y in vb) / len(vb)
    return max(fwd, bwd)


class TestIoU:
    def test_identical_highlights(self):
        h = ann("t", "human", seg(0, 20, "a"))
        l = ann("t", "llm", seg(0, 20, "b"))
        assert iou(h, l) == 1.0

    def test_disjoint_highlights(self):
        h = ann("t", "human", seg(0, 20, "a"))
        l = ann("t", "llm", seg(25, 58, "a"))
        assert iou(h, l) == 0.0

    def test_shared_plus_extra_disjoint_segment(self):
        # one 36-char segment on both sides, LLM adds a disjoint 58-char one
        h = ann("t", "human", seg(100, 136, "a"))
        l = ann("t", "llm", seg(0, 58, "b"), seg(100, 136, "a"))
        assert iou(h, l) == pytest.approx(36 / 94, abs=1e-15)

    def test_both_empty_is_perfect_agreement(self):
        assert iou(ann("t", "human"), ann("t", "llm")) == 1.0

    def test_text_mismatch(self):
        with pytest.raises(TextMismatch):
            iou(ann("a", "human"), ann("b", "llm"))

    def test_symmetric_and_matches_oracle(self, rng):
        for _ in range(300):
            body_len = int(rng.integers(5, 80))
            h = Annotation.from_segments("t", "human", random_segments(rng, body_len))
            l = Annotation.from_segments("t", "llm", random_segments(rng, body_len))
            expected = iou_oracle(h, l)
            assert iou(h, l) == pytest.approx(expected, abs=1e-15)
            assert iou(
                Annotation("t", "human", l.segments), Annotation("t", "llm", h.segments)
            ) == pytest.approx(expected, abs=1e-15)

    def test_one_iff_equal_coverage(self):
        h = ann("t", "human", seg(0, 3, "a"), seg(5, 8, "b"))
        same_cover = ann("t", "llm", seg(0, 3, "x"), seg(5, 8, "y"))
        assert iou(h, same_cover) == 1.0
        shifted = ann("t", "llm", seg(0, 3, "x"), seg(5, 9, "y"))
        assert iou(h, shifted) < 1.0

    def test_monotone_as_disjoint_chars_added_to_one_side(self):
        h = ann("t", "human", seg(0, 10, "a"))
        scores = []
        for extra in range(0, 5):
            segs = [seg(0, 10, "a")]
            if extra:
                segs.append(seg(20, 20 + extra, "b"))
            scores.append(iou(h, Annotation.from_segments("t", "llm", segs)))
        assert scores == sorted(scores, reverse=True)


class TestMHD:
    provider = MockEmbeddingProvider()

    def test_identical_code_sets_zero(self):
        assert mhd(["travel frequency"], ["travel frequency"], self.provider) == 0.0
        assert mhd(["a", "b", "c"], ["a", "b", "c"], self.provider) == 0.0

    def test_both_empty_zero(self):
        assert mhd([], [], self.provider) == 0.0

    def test_one_sided_is_two(self):
        assert mhd(["a"], [], self.provider) == 2.0
        assert mhd([], ["a"], self.provider) == 2.0

    def test_symmetric(self, rng):
        for _ in range(30):
            a = list(random_codes(rng, 4))
            b = list(random_codes(rng, 4))
            assert mhd(a, b, self.provider) == pytest.approx(
                mhd(b, a, self.provider), abs=1e-15
            )

    def test_order_and_duplication_invariant(self):
        base = mhd(["a", "b"], ["c"], self.provider)
        assert mhd(["b", "a", "a"], ["c", "c"], self.provider) == pytest.approx(base, abs=1e-15)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(200):
            a = list(random_codes(rng, 5))
            b = list(random_codes(rng, 5))
            assert mhd(a, b, self.provider) == pytest.approx(
                mhd_oracle(a, b, self.provider), abs=1e-12
            )

    def test_two_on_one_matches_hand_formula(self):
        a = ["alpha", "beta"]
        b = ["gamma"]
        va = self.provider.embed(a)
        vb = self.provider.embed(b)
        d1 = cosine_distance(va[0], vb[0])
        d2 = cosine_distance(va[1], vb[0])
        expected = max((d1 + d2) / 2, min(d1, d2))
        assert mhd(a, b, self.provider) == pytest.approx(expected, abs=1e-12)

    def test_scale_invariance_of_embeddings(self, rng):
        class Scaled:
            provider_id = "scaled"

            def __init__(self, inner, alpha):
                self.inner = inner
                self.alpha = alpha

            def embed(self, texts):
                return [
                    EmbeddingVector.of(self.alpha * v.values) for v in self.inner.embed(texts)
                ]

        a = ["x", "y"]
        b = ["z"]
        base = mhd(a, b, self.provider)
        for alpha in (0.25, 3.0, 17.5):
            assert mhd(a, b, Scaled(self.provider, alpha)) == pytest.approx(base, abs=1e-9)

    def test_range(self, rng):
        for _ in range(100):
            a = list(random_codes(rng, 4))
            b = list(random_codes(rng, 4))
            assert 0.0 <= mhd(a, b, self.provider) <= 2.0


class TestAlignmentReport:
    provider = MockEmbeddingProvider()

    def _layers(self):
        texts = {
            "t1": SourceText(id="t1", body="x" * 30, created_order=0),
            "t2": SourceText(id="t2", body="y" * 30, created_order=1),
        }
        human = {
            "t1": ann("t1", "human", seg(0, 10, "a")),
            "t2": ann("t2", "human", seg(0, 10, "a")),
        }
        llm = {
            "t1": ann("t1", "llm", seg(0, 10, "a")),
            "t2": ann("t2", "llm", seg(15, 25, "a")),
        }
        return texts, human, llm

    def test_mean_iou(self):
        texts, human, llm = self._layers()
        report = alignment_report(human, llm, texts, ["t1", "t2"], self.provider)
        assert report.mean_iou == pytest.approx(0.5, abs=1e-12)
        assert report.mean_mhd == pytest.approx(0.0, abs=1e-12)  # same codes both texts

    def test_empty_ids_flagged_undefined(self):
        texts, human, llm = self._layers()
        report = alignment_report(human, llm, texts, [], self.provider)
        assert report.per_text == ()
        assert report.mean_iou is None and report.mean_mhd is None

    def test_missing_annotation(self):
        texts, human, llm = self._layers()
        del llm["t2"]
        with pytest.raises(MissingAnnotation):
            alignment_report(human, llm, texts, ["t1", "t2"], self.provider)

    def test_report_equals_componentwise_recomputation(self, rng):
        texts = {}
        human = {}
        llm = {}
        for i in range(12):
            tid = f"t{i}"
            body_len = int(rng.integers(10, 60))
            texts[tid] = SourceText(id=tid, body="z" * body_len, created_order=i)
            human[tid] = Annotation.from_segments(tid, "human", random_segments(rng, body_len))
            llm[tid] = Annotation.from_segments(tid, "llm", random_segments(rng, body_len))
        ids = sorted(texts)
        report = alignment_report(human, llm, texts, ids, self.provider)
        for row in report.per_text:
            assert row.iou == pytest.approx(iou(human[row.text_id], llm[row.text_id]), abs=1e-15)
            assert row.mhd == pytest.approx(
                mhd(
                    human[row.text_id].code_set(),
                    llm[row.text_id].code_set(),
                    self.provider,
                ),
                abs=1e-15,
            )
        assert report.mean_iou == pytest.approx(
            sum(r.iou for r in report.per_text) / len(report.per_text), abs=1e-12
        )

    def test_flags_and_exclusive_means(self):
        texts = {
            "t1": SourceText(id="t1", body="x" * 20, created_order=0),
            "t2": SourceText(id="t2", body="y" * 20, created_order=1),
            "t3": SourceText(id="t3", body="z" * 20, created_order=2),
        }
        human = {
            "t1": ann("t1", "human"),
            "t2": ann("t2", "human", seg(0, 5, "a")),
            "t3": ann("t3", "human", seg(0, 5, "a")),
        }
        llm = {
            "t1": ann("t1", "llm"),
            "t2": ann("t2", "llm"),
            "t3": ann("t3", "llm", seg(0, 5, "a")),
        }
        report = alignment_report(human, llm, texts, ["t1", "t2", "t3"], self.provider)
        by_id = {r.text_id: r for r in report.per_text}
        assert by_id["t1"].flags == ("both_uncoded",)
        assert by_id["t2"].flags == ("one_sided",)
        assert by_id["t2"].mhd == 2.0
        assert by_id["t3"].flags == ()
        assert report.n_both_uncoded == 1
        assert report.n_one_sided == 1
        # inclusive mean counts the trivial 1.0 row; exclusive does not
        assert report.mean_iou == pytest.approx((1.0 + 0.0 + 1.0) / 3, abs=1e-12)
        assert report.exclusive_mean_iou == pytest.approx(0.5, abs=1e-12)

    def test_json_roundtrip(self):
        texts, human, llm = self._layers()
        report = alignment_report(human, llm, texts, ["t1", "t2"], self.provider)
        restored = AlignmentReport.from_json(json.loads(json.dumps(report.to_json())))
        assert restored == report

    def test_csv_export(self):
        texts, human, llm = self._layers()
        report = alignment_report(human, llm, texts, ["t1", "t2"], self.provider)
        lines = report.to_csv().splitlines()
        assert lines[0] == "text_id,iou,mhd,flags"
        assert len(lines) == 3
        assert lines[1].startswith("t1,1.0,")


class TestRankTexts:
    provider = MockEmbeddingProvider()

    def _report(self, ious_by_id: dict[str, float]) -> AlignmentReport:
        from codealign.metrics import TextAlignment

        rows = [
            TextAlignment(
                text_id=tid,
                iou=v,
                mhd=1.0 - v,
                human_char_count=1,
                llm_char_count=1,
                created_order=i,
            )
            for i, (tid, v) in enumerate(ious_by_id.items())
        ]
        return AlignmentReport.from_rows(rows)

    def test_iou_ascending(self):
        report = self._report({"t1": 0.2, "t2": 0.9})
        assert rank_texts(report, "iou_asc") == ["t1", "t2"]
        assert rank_texts(report, "iou_desc") == ["t2", "t1"]

    def test_mhd_desc(self):
        report = self._report({"t1": 0.2, "t2": 0.9})
        assert rank_texts(report, "mhd_desc") == ["t1", "t2"]

    def test_ties_break_by_created_order(self):
        report = self._report({"b": 0.5, "a": 0.5, "c": 0.5})
        assert rank_texts(report, "iou_asc") == ["b", "a", "c"]

    def test_sortedness_property(self, rng):
        for _ in range(50):
            ids = {f"t{i}": float(rng.random()) for i in range(10)}
            report = self._report(ids)
            ordered = rank_texts(report, "iou_asc")
            values = [ids[t] for t in ordered]
            assert values == sorted(values)

    def test_unknown_key_rejected(self):
        report = self._report({"t1": 0.1})
        with pytest.raises(ValueError):
            rank_texts(report, "bogus")
