"""Shared exception and warning types."""


class DomainError(ValueError):
    """An argument or intermediate quantity lies outside its valid domain."""


class ParseError(ValueError):
    """A data file violates the field file format.

    Carries the 1-based line and column of the offending cell when known.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class WeakSepWarning(UserWarning):
    """Base class for diagnostic warnings attached to test reports."""


class RhoHatRangeWarning(WeakSepWarning):
    """The eigenvalue ratio rho_hat left the plausible [0.01, 100] band."""


class SigmaFloorWarning(WeakSepWarning):
    """A variance estimate came out nonpositive and was floored."""


class DegenerateFitWarning(WeakSepWarning):
    """A correlation fit clamped to its parameter boundary."""


class BandwidthWidenedWarning(WeakSepWarning):
    """A local-linear fit had to widen its bandwidth at some target point."""


class DroppedLagWarning(WeakSepWarning):
    """A requested lag admitted no location pairs and was dropped."""
