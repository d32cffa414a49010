"""Exception types shared across the package."""


class GrkanError(Exception):
    """Base class for all package-specific errors."""


class LayoutMismatchError(GrkanError):
    """Tensor feature dimension does not match the group layout."""


class GridGeometryError(GrkanError):
    """Execution plan grid does not tile the tensor it was applied to."""


class PartialCoverageError(GrkanError):
    """A block partial is missing or duplicated in a combine step."""


class AccumulationOverflowError(GrkanError):
    """A coefficient-gradient accumulator became non-finite."""


class NonFiniteInputError(GrkanError):
    """A checked-mode input contained NaN or infinity."""


class DegenerateAlphaError(GrkanError):
    """The activation second moment is zero or non-finite, so no weight scale exists."""


class TailNotCoveredError(GrkanError):
    """The closed-form access count requires exact tiling and the shape has a tail."""


class ActivationFitError(GrkanError):
    """Least-squares activation fit failed; carries conditioning diagnostics."""
