"""Exception hierarchy shared by every cipflow module."""


class PowerFlowError(Exception):
    """Base class for all package errors."""


class CaseParseError(PowerFlowError, ValueError):
    """A case document could not be parsed.

    ``line`` is the 1-based line number for text formats, ``path`` a JSON path
    for native documents; either may be ``None``.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif path is not None:
            where = f"{path}: "
        super().__init__(where + message)


class CaseValidationError(PowerFlowError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SingularMatrixError(PowerFlowError, ArithmeticError):
    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is numerically singular at pivot {pivot}")


class DegenerateVoltageError(PowerFlowError, ArithmeticError):
    """Bus voltage collapsed towards zero, usually a diverging iterate."""


class PvAngleOverflowError(PowerFlowError, ArithmeticError):
    """|V_y| reached the PV target magnitude so V_x has no real root."""


class MissingPmuAngleError(PowerFlowError, ValueError):
    def __init__(self, bus_ids):
        self.bus_ids = list(bus_ids)
        super().__init__(f"no PMU angle for PV bus(es) {self.bus_ids}")
