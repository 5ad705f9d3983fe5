"""Exception hierarchy shared by all hipgraf modules."""


class HipGrafError(Exception):
    """Base class for every error raised by this package."""


class DecodeError(HipGrafError):
    """Raster bytes could not be decoded into an image."""


class DimensionError(HipGrafError):
    """Zero-sized image or mismatched mask dimensions."""


class RLEFormatError(HipGrafError):
    pass


class SchemaError(HipGrafError):
    """A manifest line is missing a field or has a malformed value."""

    def __init__(self, line: int, field: str, message: str = "") -> None:
        self.line = line
        self.field = field
        detail = f": {message}" if message else ""
        super().__init__(f"line {line}: field '{field}'{detail}")


class UniquenessError(HipGrafError):
    pass


class EmptyInputError(HipGrafError):
    """Operation requires at least one foreground pixel."""


class DegenerateGeometryError(HipGrafError):
    pass


class TangentUndefinedError(HipGrafError):
    """The query point lies strictly inside the convex hull."""


class TooNarrowError(HipGrafError):
    pass


class SingularFitError(HipGrafError):
    pass


class UndefinedSimilarityError(HipGrafError):
    pass


class StructureMismatchError(HipGrafError):
    """A structure is present in one set and absent in the other."""


class MissingStructureError(HipGrafError):
    pass


class UnmeasurableLandmarkError(HipGrafError):
    def __init__(self, landmark: str) -> None:
        self.landmark = landmark
        super().__init__(f"no source available for landmark {landmark}")


class DomainError(HipGrafError):
    pass


class UndefinedDistanceError(HipGrafError):
    pass


class EmptyEvaluationError(HipGrafError):
    pass


class PhantomInfeasibleError(HipGrafError):
    """Requested phantom geometry does not fit on the canvas."""
