"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all promptlf errors."""


class ParseError(PipelineError):
    """A line-delimited input file failed to parse."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class DuplicateId(PipelineError):
    pass


class EmptyRegistry(PipelineError):
    pass


class MissingLabel(PipelineError):
    pass


class UnknownLanguage(PipelineError):
    pass


class ClassTooSmall(PipelineError):
    pass


class TransportError(PipelineError):
    """Gateway call failed after transport-level retries."""


class RequestTimeout(TransportError):
    pass


class AuthError(PipelineError):
    pass


class ImageLoadError(PipelineError):
    pass


class MissingBaseFeatures(PipelineError):
    """Incremental extraction requested but base-batch cells are not cached."""


class ExtractionAborted(PipelineError):
    """Too many cells failed; the run was aborted rather than silently holed."""

    def __init__(self, failed: int, total: int, examples: list[str]):
        self.failed = failed
        self.total = total
        self.examples = examples
        shown = ", ".join(examples[:5])
        super().__init__(
            f"{failed}/{total} cells errored (over threshold); first failures: {shown}"
        )


class SingleClass(PipelineError):
    pass


class ShapeMismatch(PipelineError):
    pass


class FeatureMismatch(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


class EmptyInput(PipelineError):
    pass


class KOutOfRange(PipelineError):
    pass


class ConfigError(PipelineError):
    pass
