"""Exception hierarchy shared across the package."""


class UrbanFluxError(Exception):
    """Base class for all domain errors."""


class ParseError(UrbanFluxError):
    """A file row could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class RangeError(UrbanFluxError):
    """A value falls outside its documented domain."""


class OrderTimeError(UrbanFluxError):
    """A trip order has a non-positive or implausibly long duration."""


class DegenerateExtent(UrbanFluxError):
    """A bounding box spans less than one grid step in some axis."""


class EmptyDataset(UrbanFluxError):
    """No samples survive cleaning, or a dataset carries no activity."""


class ShapeError(UrbanFluxError):
    """An array has the wrong width or length for the operation."""


class DivergenceError(UrbanFluxError):
    """Training produced a non-finite loss or parameter."""


class ZeroGroundTruth(UrbanFluxError):
    """Relative accuracy is undefined for a zero ground-truth total."""


class NormMismatch(UrbanFluxError):
    """Two artifacts carry different normalization constants."""


class Infeasible(UrbanFluxError):
    """A constraint set admits no feasible individual."""


class NegativeCount(UrbanFluxError):
    """An edit or decode produced a negative category count."""
