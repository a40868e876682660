"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array shapes or spectral grids do not line up."""


class RankError(ValueError):
    """A sensitivity matrix does not have three independent columns."""


class FitError(ValueError):
    """A regression problem is too degenerate to solve."""


class TrainingError(RuntimeError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigurationError(ValueError):
    """Incompatible models, sensitivities or settings were combined."""


class FormatError(ValueError):
    """A binary or text file could not be parsed.

    ``offset`` is the byte offset (binary files) or line number (text files)
    where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset
