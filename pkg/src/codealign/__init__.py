"""codealign: a workbench for LLM-assisted inductive qualitative coding.

Quantifies alignment between a researcher's annotations and an LLM's via
character-level IoU over highlights and Modified Hausdorff Distance over code
embeddings, inside an iterative example-curation workflow.
"""

from .annotation import (
    Annotation,
    Codebook,
    CodedSegment,
    SourceText,
    Span,
    import_corpus,
    merge_overlapping_segments,
    parse_annotated,
    serialize_annotated,
    strip_annotations,
)
from .clustering import KMeansResult, kmeans
from .coder import (
    CodingRun,
    FidelityMockChatProvider,
    HttpChatProvider,
    MockChatProvider,
    PromptSpec,
    Theme,
    build_prompt,
    code_inductively,
    edit_distance,
    generate_code_description,
    group_codes_into_themes,
    normalized_edit_distance,
    reconstruct,
    verify_and_reconstruct,
)
from .embeddings import (
    CachedEmbeddingProvider,
    EmbeddingVector,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    cosine_distance,
)
from .metrics import (
    AlignmentReport,
    TextAlignment,
    alignment_report,
    iou,
    mhd,
    rank_texts,
)
from .analysis import (
    BaselineResult,
    DataSplit,
    ExpFitParams,
    ExtrapolationResult,
    LearningCurvePoint,
    chronological_examples,
    extrapolation_analysis,
    fit_exp_curve,
    learning_curve,
    new_code_fraction,
    pearson,
    random_baseline,
)
from .project import ProjectService, ProjectState, ProjectStore

__version__ = "0.1.0"
