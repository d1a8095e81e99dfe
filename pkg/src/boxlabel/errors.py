"""Exception types shared across the package."""


class BoxLabelError(Exception):
    """Base class for all package errors."""


class DegenerateBox(BoxLabelError):
    """A box has zero area after validation/clipping."""


class UnknownClassId(BoxLabelError):
    """A class id lies outside the configured [1, C] range."""


class ParseError(BoxLabelError):
    """A JSON input file does not follow the expected schema."""


class FormatError(BoxLabelError):
    """An image file has an unsupported pixel format."""


class DimensionMismatch(BoxLabelError):
    """Two arrays that must share dimensions do not."""


class CountMismatch(BoxLabelError):
    """Paired lists (e.g. segments vs boxes) differ in length."""


class EmptyInput(BoxLabelError):
    """An operation received an empty collection it cannot handle."""


class EmptyDataset(BoxLabelError):
    """Evaluation was asked to score zero pixels/images."""


class BothEmpty(BoxLabelError):
    """IoU of two empty masks is undefined."""


class MissingBoundaryMap(BoxLabelError):
    """Boundary-driven pairwise terms requested without a boundary map."""


class MissingMask(BoxLabelError):
    """Instance evaluation requires detections to carry masks."""


class TooLarge(BoxLabelError):
    """Brute-force enumeration requested on too many nodes."""


class ImageTooLarge(BoxLabelError):
    """Dense CRF inference would exceed the compute/memory budget."""


class SpecInfeasible(BoxLabelError):
    """Synthetic scene constraints could not be satisfied."""
