"""Desk-scale reproductions of the alignment analyses.

Covers example-set splits, learning curves with asymptotic-exponential fits,
new-code saturation, cluster-based extrapolation with Pearson correlation,
and the random example-selection baseline. Everything here runs offline
against the mock providers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .annotation import Annotation, Codebook, SourceText
from .clustering import KMeansResult, kmeans  # re-exported: clustering is part of this lab
from .coder import ChatProvider, CodingRun, PromptSpec, code_inductively
from .embeddings import EmbeddingProvider
from .errors import EmptyLog, InsufficientExamples, TestSetViolation, TooFewClusters
from .metrics import AlignmentReport, alignment_report, mhd

__all__ = [
    "DataSplit",
    "LearningCurvePoint",
    "ExpFitParams",
    "chronological_examples",
    "sample_balanced_examples",
    "run_with_examples",
    "learning_curve",
    "fit_exp_curve",
    "new_code_fraction",
    "code_applications",
    "kmeans",
    "KMeansResult",
    "pearson",
    "extrapolation_analysis",
    "ExtrapolationResult",
    "random_baseline",
    "BaselineResult",
]


@dataclass(frozen=True)
class DataSplit:
    """Teaching examples, validation texts, and a frozen held-out test set.

    The three sets are pairwise disjoint. Once any validation metric has been
    viewed, the test set is frozen: moving texts in or out of it would leak
    the iteration signal the test set exists to guard against.
    """

    example_ids: tuple[str, ...] = ()
    validation_ids: tuple[str, ...] = ()
    test_ids: tuple[str, ...] = ()
    test_frozen: bool = False

    def __post_init__(self):
        sets = {
            "examples": set(self.example_ids),
            "validation": set(self.validation_ids),
            "test": set(self.test_ids),
        }
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                overlap = sets[a] & sets[b]
                if overlap:
                    raise TestSetViolation(f"{a} and {b} share texts: {sorted(overlap)}")

    def with_examples(self, example_ids: Sequence[str]) -> "DataSplit":
        """New split with these examples; the derived validation set is cleared
        for the owner to recompute."""
        clash = set(example_ids) & set(self.test_ids)
        if clash:
            raise TestSetViolation(f"texts {sorted(clash)} belong to the test set")
        return replace(self, example_ids=tuple(example_ids), validation_ids=())

    def with_test(self, test_ids: Sequence[str]) -> "DataSplit":
        if self.test_frozen and tuple(test_ids) != self.test_ids:
            raise TestSetViolation("test set is frozen: validation metrics have been viewed")
        clash = set(test_ids) & set(self.example_ids)
        if clash:
            raise TestSetViolation(f"texts {sorted(clash)} are teaching examples")
        return replace(self, test_ids=tuple(test_ids), validation_ids=())

    def freeze_test(self) -> "DataSplit":
        return replace(self, test_frozen=True)


def _annotated_in_order(
    texts: Sequence[SourceText], human_layer: Mapping[str, Annotation]
) -> list[SourceText]:
    return sorted(
        (t for t in texts if t.id in human_layer), key=lambda t: (t.created_order, t.id)
    )


def chronological_examples(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    n: int,
    balance: bool = True,
) -> list[str]:
    """First n annotated texts by created_order; with balance, the first n/2
    positive (coded) and n/2 negative (uncoded) ones. Odd n takes the extra
    example from the positives."""
    annotated = _annotated_in_order(texts, human_layer)
    if not balance:
        if len(annotated) < n:
            raise InsufficientExamples(f"need {n} annotated texts, have {len(annotated)}")
        return [t.id for t in annotated[:n]]
    n_pos = n - n // 2
    n_neg = n // 2
    positives = [t for t in annotated if human_layer[t.id].is_positive]
    negatives = [t for t in annotated if not human_layer[t.id].is_positive]
    if len(positives) < n_pos or len(negatives) < n_neg:
        raise InsufficientExamples(
            f"need {n_pos} positive and {n_neg} negative examples, "
            f"have {len(positives)} and {len(negatives)}"
        )
    chosen = positives[:n_pos] + negatives[:n_neg]
    chosen.sort(key=lambda t: (t.created_order, t.id))
    return [t.id for t in chosen]


def sample_balanced_examples(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    n: int,
    rng: np.random.Generator,
) -> list[str]:
    """Uniform balanced sample without replacement: n/2 positive, n/2 negative."""
    annotated = _annotated_in_order(texts, human_layer)
    n_pos = n - n // 2
    n_neg = n // 2
    positives = [t.id for t in annotated if human_layer[t.id].is_positive]
    negatives = [t.id for t in annotated if not human_layer[t.id].is_positive]
    if len(positives) < n_pos or len(negatives) < n_neg:
        raise InsufficientExamples(
            f"need {n_pos} positive and {n_neg} negative candidates, "
            f"have {len(positives)} and {len(negatives)}"
        )
    chosen = [positives[i] for i in rng.choice(len(positives), size=n_pos, replace=False)]
    chosen += [negatives[i] for i in rng.choice(len(negatives), size=n_neg, replace=False)]
    order = {t.id: (t.created_order, t.id) for t in annotated}
    chosen.sort(key=order.__getitem__)
    return chosen


def run_with_examples(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    example_ids: Sequence[str],
    chat_provider: ChatProvider,
    embedding_provider: EmbeddingProvider,
    eval_ids: Sequence[str] | None = None,
    custom_instructions: Sequence[str] = (),
    codebook: Codebook | None = None,
) -> tuple[CodingRun, AlignmentReport]:
    """Teach with the given examples, code the held-out annotated remainder
    (or an explicit eval set), and score the result."""
    by_id = {t.id: t for t in texts}
    examples = tuple((by_id[i], human_layer[i]) for i in example_ids)
    if eval_ids is None:
        eval_ids = [
            t.id for t in _annotated_in_order(texts, human_layer) if t.id not in set(example_ids)
        ]
    if not eval_ids:
        raise InsufficientExamples("no annotated texts left to evaluate on")
    spec = PromptSpec(
        codebook=codebook.copy() if codebook is not None else Codebook(),
        examples=examples,
        custom_instructions=tuple(custom_instructions),
    )
    run = code_inductively([by_id[i] for i in eval_ids], spec, chat_provider)
    report = alignment_report(human_layer, run.llm_layer, by_id, list(eval_ids), embedding_provider)
    return run, report


@dataclass(frozen=True)
class LearningCurvePoint:
    n_examples: int
    mean_iou: float
    mean_mhd: float


def learning_curve(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    sizes: Sequence[int],
    chat_provider: ChatProvider,
    embedding_provider: EmbeddingProvider,
    balance: bool = True,
    custom_instructions: Sequence[str] = (),
    eval_ids: Sequence[str] | None = None,
) -> list[LearningCurvePoint]:
    """Model performance at increasing example-set sizes.

    The annotated data is divided once into an example pool and an evaluation
    group: examples at each size are the chronologically-first n of the pool,
    and every size is scored on the same held-out group (by default, whatever
    the largest size leaves over). Scoring on a fixed group keeps the points
    comparable across sizes."""
    if not sizes:
        return []
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    if eval_ids is None:
        largest = chronological_examples(texts, human_layer, max(sizes), balance=balance)
        taken = set(largest)
        ordered = _annotated_in_order(texts, human_layer)
        eval_ids = [t.id for t in ordered if t.id not in taken]
    if not eval_ids:
        raise InsufficientExamples("no annotated texts left to evaluate on")
    points: list[LearningCurvePoint] = []
    for n in sizes:
        example_ids = chronological_examples(texts, human_layer, n, balance=balance)
        overlap = set(example_ids) & set(eval_ids)
        if overlap:
            raise InsufficientExamples(
                f"example set at size {n} overlaps the evaluation group: {sorted(overlap)}"
            )
        _, report = run_with_examples(
            texts,
            human_layer,
            example_ids,
            chat_provider,
            embedding_provider,
            eval_ids=eval_ids,
            custom_instructions=custom_instructions,
        )
        points.append(
            LearningCurvePoint(
                n_examples=n,
                mean_iou=report.mean_iou if report.mean_iou is not None else float("nan"),
                mean_mhd=report.mean_mhd if report.mean_mhd is not None else float("nan"),
            )
        )
    return points


@dataclass(frozen=True)
class ExpFitParams:
    """Parameters of y(n) = a - b * exp(-c * n); b < 0 gives the decaying form."""

    a: float
    b: float
    c: float
    residual_sse: float
    degenerate: bool = False

    def predict(self, n: float) -> float:
        return self.a - self.b * np.exp(-self.c * n)


def _exp_model(n, a, b, c):
    return a - b * np.exp(-c * n)


def fit_exp_curve(points: Sequence[tuple[float, float]]) -> ExpFitParams:
    """Least-squares fit of an asymptotic exponential through (n, y) points.

    Multi-start local optimization over rate starts; the constant-mean model
    is always a candidate, so the returned SSE never exceeds the constant
    model's. All-equal y short-circuits to (a=y, b=0, c=0)."""
    if len(points) < 3:
        raise ValueError("need at least 3 points to fit")
    n = np.asarray([p[0] for p in points], dtype=float)
    y = np.asarray([p[1] for p in points], dtype=float)
    if len(set(n.tolist())) != len(n):
        raise ValueError("points must have distinct n values")
    if np.all(y == y[0]):
        return ExpFitParams(a=float(y[0]), b=0.0, c=0.0, residual_sse=0.0, degenerate=True)

    mean = float(np.mean(y))
    best = ExpFitParams(a=mean, b=0.0, c=0.0, residual_sse=float(np.sum((y - mean) ** 2)))
    order = np.argsort(n)
    y_first, y_last = float(y[order[0]]), float(y[order[-1]])
    for c0 in (0.01, 0.05, 0.1, 0.3, 1.0, 3.0):
        p0 = (y_last, y_last - y_first, c0)
        try:
            popt, _ = curve_fit(
                _exp_model,
                n,
                y,
                p0=p0,
                bounds=([-np.inf, -np.inf, 0.0], [np.inf, np.inf, np.inf]),
                maxfev=20000,
            )
        except (RuntimeError, ValueError):
            continue
        sse = float(np.sum((y - _exp_model(n, *popt)) ** 2))
        if sse < best.residual_sse:
            best = ExpFitParams(
                a=float(popt[0]), b=float(popt[1]), c=float(popt[2]), residual_sse=sse
            )
    return best


def code_applications(
    texts: Sequence[SourceText], human_layer: Mapping[str, Annotation]
) -> list[str]:
    """Every code application (one label on one segment), in coding-log order."""
    labels: list[str] = []
    for t in _annotated_in_order(texts, human_layer):
        for seg in human_layer[t.id].segments:
            labels.extend(seg.codes)
    return labels


def new_code_fraction(applications: Sequence[str], bins: int = 10) -> list[float]:
    """Per time-bin fraction of code applications whose label is first seen in
    that bin. Applications are split into equal-count bins in log order; a bin
    with no applications reports 0.0."""
    if not applications:
        raise EmptyLog("coding log has no code applications")
    first_bin: dict[str, int] = {}
    chunks = np.array_split(np.arange(len(applications)), bins)
    bin_of = np.empty(len(applications), dtype=int)
    for b, chunk in enumerate(chunks):
        bin_of[chunk] = b
    for idx, label in enumerate(applications):
        first_bin.setdefault(label, int(bin_of[idx]))
    fractions: list[float] = []
    for b, chunk in enumerate(chunks):
        if len(chunk) == 0:
            fractions.append(0.0)
            continue
        new = sum(1 for i in chunk if first_bin[applications[int(i)]] == b)
        fractions.append(new / len(chunk))
    return fractions


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation coefficient, or None when undefined (fewer than two
    points or zero variance on either side)."""
    if len(xs) != len(ys):
        raise ValueError("x and y must have equal length")
    if len(xs) < 2:
        return None
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    var_x = float(np.dot(dx, dx))
    var_y = float(np.dot(dy, dy))
    if var_x == 0.0 or var_y == 0.0:
        return None
    return float(np.dot(dx, dy) / np.sqrt(var_x * var_y))


@dataclass(frozen=True)
class ExtrapolationResult:
    points: tuple[tuple[float, float], ...]  # (example-set MHD, output MHD) per text
    pearson_r: float | None
    teaching_cluster: int
    example_ids: tuple[str, ...]
    code_clusters: dict = field(default_factory=dict)  # label -> cluster index


def extrapolation_analysis(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    chat_provider: ChatProvider,
    embedding_provider: EmbeddingProvider,
    k: int = 5,
    seed: int = 0,
    teaching_cluster: int | None = None,
) -> ExtrapolationResult:
    """Can the model annotate beyond the themes its examples came from?

    Codes are clustered into k groups; the model is taught only with texts
    whose codes sit inside one cluster, then scored on the rest. Each scored
    text contributes x = MHD(its human codes, the example-set codes) and
    y = MHD(its human codes, the LLM codes); the Pearson correlation of those
    pairs measures how strongly performance tracks example similarity."""
    by_id = {t.id: t for t in texts}
    labels: list[str] = []
    for t in _annotated_in_order(texts, human_layer):
        for code in human_layer[t.id].code_set():
            if code not in labels:
                labels.append(code)
    if len(labels) < k:
        raise TooFewClusters(f"{len(labels)} distinct codes cannot span {k} clusters")
    vectors = embedding_provider.embed(labels)
    clusters = kmeans(vectors, k, seed)
    cluster_of = {label: int(c) for label, c in zip(labels, clusters.assignments)}

    single_cluster: dict[int, list[str]] = {}
    for t in _annotated_in_order(texts, human_layer):
        codes = human_layer[t.id].code_set()
        if not codes:
            continue
        spanned = {cluster_of[c] for c in codes}
        if len(spanned) == 1:
            single_cluster.setdefault(next(iter(spanned)), []).append(t.id)
    if not single_cluster:
        raise InsufficientExamples("no text draws all its codes from a single cluster")
    if teaching_cluster is None:
        teaching_cluster = max(single_cluster, key=lambda c: (len(single_cluster[c]), -c))
    example_ids = single_cluster.get(teaching_cluster, [])
    if not example_ids:
        raise InsufficientExamples(f"cluster {teaching_cluster} has no single-cluster texts")

    eval_ids = [
        t.id
        for t in _annotated_in_order(texts, human_layer)
        if t.id not in set(example_ids) and human_layer[t.id].code_set()
    ]
    if not eval_ids:
        raise InsufficientExamples("no coded texts left to evaluate on")
    run, _ = run_with_examples(
        texts, human_layer, example_ids, chat_provider, embedding_provider, eval_ids=eval_ids
    )
    example_codes: list[str] = []
    for i in example_ids:
        for code in human_layer[i].code_set():
            if code not in example_codes:
                example_codes.append(code)
    points: list[tuple[float, float]] = []
    for tid in eval_ids:
        human_codes = human_layer[tid].code_set()
        x = mhd(human_codes, example_codes, embedding_provider)
        y = mhd(human_codes, run.llm_layer[tid].code_set(), embedding_provider)
        points.append((x, y))
    r = pearson([p[0] for p in points], [p[1] for p in points])
    return ExtrapolationResult(
        points=tuple(points),
        pearson_r=r,
        teaching_cluster=teaching_cluster,
        example_ids=tuple(example_ids),
        code_clusters=cluster_of,
    )


@dataclass(frozen=True)
class BaselineResult:
    trial_reports: tuple[AlignmentReport, ...]
    trial_example_ids: tuple[tuple[str, ...], ...]
    mean_iou: float
    mean_mhd: float


def random_baseline(
    texts: Sequence[SourceText],
    human_layer: Mapping[str, Annotation],
    n_examples: int,
    chat_provider: ChatProvider,
    embedding_provider: EmbeddingProvider,
    trials: int = 5,
    seed: int = 0,
) -> BaselineResult:
    """Random example-selection baseline: balanced uniform example sets,
    per-metric means averaged across trials. Trial i draws from the generator
    seeded with [seed, i], so any single trial can be reproduced directly."""
    reports: list[AlignmentReport] = []
    chosen: list[tuple[str, ...]] = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        example_ids = sample_balanced_examples(texts, human_layer, n_examples, rng)
        _, report = run_with_examples(
            texts, human_layer, example_ids, chat_provider, embedding_provider
        )
        reports.append(report)
        chosen.append(tuple(example_ids))
    return BaselineResult(
        trial_reports=tuple(reports),
        trial_example_ids=tuple(chosen),
        mean_iou=sum(r.mean_iou for r in reports) / len(reports),
        mean_mhd=sum(r.mean_mhd for r in reports) / len(reports),
    )
