"""Exception hierarchy and the process exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class RareActionError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_DATA


class ConfigError(RareActionError):
    """Invalid configuration: bad parameter values, missing paths, bad flag combinations."""

    exit_code = EXIT_CONFIG


class DataError(RareActionError):
    """Problems with input data: files, manifests, annotations, degenerate label sets."""

    exit_code = EXIT_DATA


class NumericError(RareActionError):
    """Non-finite values where finite numbers are required (losses, embeddings)."""

    exit_code = EXIT_NUMERIC


class InvalidInputError(DataError):
    """An operation was called with arguments violating its contract."""


class DecodeError(DataError):
    """A video container or frame directory could not be decoded."""


class EmptyVideoError(DecodeError):
    """Decoding succeeded but produced zero frames."""


class TooFewFramesError(InvalidInputError):
    """An operation needs more frames than the sequence holds."""


class FormatError(DataError):
    """A binary feature file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmbedderError(DataError):
    """An embedding backend failed; the message carries backend diagnostics."""


class ThresholdError(DataError):
    """Decision-threshold selection is impossible (e.g. no positive labels)."""


class FoldError(DataError):
    """Cross-validation folds cannot be formed from the given groups."""


class StratificationError(FoldError):
    """Fold re-draws were exhausted without every fold seeing both classes."""


class SlicingError(DataError):
    """A source video cannot be cut into the expected clip layout."""


class SplitError(DataError):
    """A grouped train/test split cannot be formed."""


class SamplingError(DataError):
    """Representative subsampling failed its acceptance check within the retry budget."""


class MetricError(DataError):
    """A metric is undefined on the given inputs (e.g. single-class AUC)."""
