"""Exception taxonomy shared across the package.

Stage-output errors mark a single run as an abstention when caught by the
experiment runner; gateway and dataset errors are fatal for the whole run.
"""

from __future__ import annotations


class DecisionFlowError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DecisionFlowError):
    """Two grids that must share dimensions do not."""


class InfeasibleError(DecisionFlowError):
    """The constraint set leaves no admissible action."""


class TemplateError(DecisionFlowError):
    """A prompt template referenced a placeholder the context did not supply."""


class StageOutputError(DecisionFlowError):
    """Base for failures while interpreting a model completion.

    Carries the raw completion text so failed runs stay debuggable.
    """

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class OutputParseError(StageOutputError):
    """No JSON object could be recovered from the completion."""


class SchemaError(StageOutputError):
    """JSON was recovered but a required key is missing or mistyped."""


class AlignmentError(StageOutputError):
    """A named variable could not be matched to any known action."""


class AnswerRangeError(StageOutputError):
    """The answer index falls outside the action range after normalization."""


class CompletenessError(StageOutputError):
    """A grounding score is missing for a cell that survived the filter."""


class DecisionError(StageOutputError):
    """No decision could be produced (for example, every sample abstained)."""


class GatewayError(DecisionFlowError):
    """Base for completion-gateway failures."""


class TransportError(GatewayError):
    """Network-level failure that persisted through the retry budget."""


class BackendError(GatewayError):
    """The backend answered, but with an unusable payload."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class ReplayMissError(GatewayError):
    """Replay mode was asked for a request absent from the transcript store."""

    def __init__(self, digest: str):
        super().__init__(f"no recorded transcript for request digest {digest}")
        self.digest = digest


class TranscriptCorruptError(GatewayError):
    """A stored transcript does not match the digest it is filed under."""


class DatasetError(DecisionFlowError):
    """A dataset file failed validation; names the line and field."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field
