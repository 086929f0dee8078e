"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for errors raised by this package."""


class ParseError(PipelineError):
    """A tabular file failed to parse.

    ``row_index`` is the 1-based data row (0 means the header itself was
    unusable).
    """

    def __init__(self, message: str, row_index: int):
        super().__init__(f"{message} (row {row_index})")
        self.row_index = row_index


class TransportError(PipelineError):
    """A network-level failure while talking to a model or search provider."""


class SchemaError(PipelineError):
    """An agent's output failed its structured-output contract after retries."""


class CassetteMiss(PipelineError):
    """Replay mode saw a request with no recorded response left."""


class SearchUnavailable(PipelineError):
    """Every search query failed at the transport level."""


class MultiPathExhausted(PipelineError):
    """All code-generation strategies failed for a question."""


class DimensionMismatch(PipelineError):
    """Embedding vectors of inconsistent dimension."""


class DegenerateInput(PipelineError):
    """Metric input for which the formula is undefined (e.g. a zero vector)."""


class ConfigError(PipelineError):
    """Invalid or incomplete run configuration."""
