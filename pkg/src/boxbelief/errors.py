"""Exception types shared across the toolkit."""


class BoxBeliefError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class InvalidInputError(BoxBeliefError, ValueError):
    """An argument is non-finite, non-positive, or structurally malformed."""


class NotACuboidError(BoxBeliefError, ValueError):
    """A corner set does not describe a yaw-only cuboid within tolerance."""

    def __init__(self, message: str, worst_deviation: float | None = None):
        super().__init__(message)
        self.worst_deviation = worst_deviation


class InsufficientDataError(BoxBeliefError, ValueError):
    """Too few samples or measurements for the requested estimate."""


class EmptyCloudError(BoxBeliefError, ValueError):
    """A point cloud with zero points where at least one is required."""


class DegenerateGeometryError(BoxBeliefError, ValueError):
    """An edge or direction needed by a formula has collapsed to zero."""


class DegenerateUncertaintyError(BoxBeliefError, ValueError):
    """Relative uncertainties are undefined (all corner variances equal)."""


class DegenerateLabelError(BoxBeliefError, ValueError):
    """A label cannot be turned into a box (e.g. zero or negative dimension)."""


class LabelParseError(BoxBeliefError, ValueError):
    """A label file line is malformed; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class FormatError(BoxBeliefError, ValueError):
    """A binary or text payload violates its declared layout."""


class SchemaError(BoxBeliefError, ValueError):
    """A serialized record is missing fields or has an unknown schema tag."""


class JoinError(BoxBeliefError, ValueError):
    """Records from two inputs cannot be paired (frame or count mismatch)."""
