"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class RecevalError(Exception):
    """Base class for all toolkit errors."""


class ContractError(RecevalError, ValueError):
    """A caller violated an input contract (shape, length, range)."""


class ParseError(RecevalError):
    """Input bytes/text do not conform to the declared format."""


class MeshParseError(ParseError):
    """PLY/OBJ decoding failure.

    ``offset`` is a byte offset for binary bodies and a 1-based line number
    for text; ``kind`` tells which.
    """

    def __init__(self, message, offset=None, kind="byte"):
        self.offset = offset
        self.kind = kind
        if offset is not None:
            message = f"{message} (at {kind} {offset})"
        super().__init__(message)


class MalformedHeaderError(MeshParseError):
    pass


class TruncatedBodyError(MeshParseError):
    pass


class FaceIndexError(MeshParseError):
    pass


class TrajectoryParseError(ParseError):
    pass


class UnsupportedFormatError(ContractError):
    pass


class NumericalError(RecevalError):
    """Numerical failure: degenerate geometry, non-convergence."""


class DegenerateGeometryError(NumericalError):
    pass


class UnderConstrainedError(DegenerateGeometryError):
    """The point-to-plane system cannot observe all six degrees of freedom."""


class TooFewCorrespondencesError(DegenerateGeometryError):
    pass
