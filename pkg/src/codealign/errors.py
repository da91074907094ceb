"""Exception types shared across the package."""


class CodealignError(Exception):
    """Base class for all errors raised by this package."""


# --- annotation / corpus ---

class MalformedMarkup(CodealignError):
    """Annotated text does not follow the ``**...**<sup>...</sup>`` wire syntax."""


class DuplicateId(CodealignError):
    pass


class MissingField(CodealignError):
    pass


class UnreadableFile(CodealignError):
    pass


class InvalidSpan(CodealignError):
    pass


class OverlapRejected(CodealignError):
    pass


# --- embedding provider ---

class EmptyInput(CodealignError):
    pass


class ProviderUnavailable(CodealignError):
    """Backend could not be reached even after retries."""


class DimensionMismatch(CodealignError):
    pass


# --- metrics ---

class TextMismatch(CodealignError):
    pass


class MissingAnnotation(CodealignError):
    pass


# --- inductive coder ---

class PromptTooLong(CodealignError):
    pass


class HallucinatedOutput(CodealignError):
    """Model output diverges from the original text beyond the repairable threshold."""


class RunAborted(CodealignError):
    pass


class TooFewCodes(CodealignError):
    pass


# --- evaluation lab ---

class InsufficientExamples(CodealignError):
    pass


class EmptyLog(CodealignError):
    pass


class TooFewPoints(CodealignError):
    pass


class TooFewClusters(CodealignError):
    pass


# --- project service ---

class UnknownProject(CodealignError):
    pass


class UnknownText(CodealignError):
    pass


class UnannotatedExample(CodealignError):
    pass


class TestSetViolation(CodealignError):
    pass


class NoExamples(CodealignError):
    pass


class RunInProgress(CodealignError):
    pass


class UnknownRun(CodealignError):
    pass


class RunIncomplete(CodealignError):
    pass
