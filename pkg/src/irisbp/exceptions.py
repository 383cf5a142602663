"""Exception types raised across the pipeline."""


class IrisBpError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(IrisBpError):
    """An array argument has an unusable shape or length."""


class NoCircleFound(IrisBpError):
    """Circular Hough voting produced no cell above the vote floor."""


class SegmentationFailed(IrisBpError):
    """Pupil or limbus localization failed for an image.

    ``stage`` is ``"pupil"`` or ``"iris"``.
    """

    def __init__(self, stage: str, message: str = ""):
        self.stage = stage
        super().__init__(message or f"segmentation failed at stage: {stage}")


class OddDimension(IrisBpError):
    """A wavelet halving step was given an odd-sized dimension."""


class AllMasked(IrisBpError):
    """Every cell of a normalized texture is invalid; no features exist."""


class EmptyDataset(IrisBpError):
    """Training requires at least one sample."""


class RangeError(IrisBpError):
    """A label id does not fit the available output bits."""


class ParseError(IrisBpError):
    """A manifest or model file is malformed; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingFile(IrisBpError):
    """A file referenced by a manifest does not exist."""


class ContiguityError(IrisBpError):
    """Manifest subject ids do not form a contiguous 0..C-1 range."""


class TooFewImages(IrisBpError):
    """A subject has too few images for the requested split."""
