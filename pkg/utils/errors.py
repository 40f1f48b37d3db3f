class PmisError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(PmisError, ValueError):
    pass


class NotPositiveDefinite(PmisError, ValueError):
    pass


class NonFiniteDensity(PmisError, ArithmeticError):
    pass


class InvalidSize(PmisError, ValueError):
    pass


class NotAPartition(PmisError, ValueError):
    """
    Raised by partition validation. `violation` names the first property that failed:
    'empty subset', 'out of range', 'overlap', 'coverage gap' or 'group_of mismatch'.
    """

    def __init__(self, violation: str, detail: str = ""):
        self.violation = violation
        msg = f"not a partition ({violation})"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NonFiniteWeight(PmisError, ArithmeticError):
    pass


class AllWeightsZero(PmisError, ArithmeticError):
    pass


class ScheduleInvalid(PmisError, ValueError):
    pass


class ParseError(PmisError, ValueError):
    """Bad config line or bad flag value. Exactly one of `line` / `flag` is usually set."""

    def __init__(self, message: str, line: int = None, flag: str = None):
        self.line = line
        self.flag = flag
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif flag:
            where = f"flag --{flag}: "
        super().__init__(f"{where}{message}")


class InvalidConfig(PmisError, ValueError):
    pass


class InvalidPoint(PmisError, ValueError):
    pass
