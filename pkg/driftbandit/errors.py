class BanditError(Exception):
    """Base class for every error raised by driftbandit."""


class UnknownArmError(BanditError, KeyError):
    def __init__(self, arm, where="arm pool"):
        self.arm = arm
        super().__init__(f"Unknown arm {arm!r} for {where}")

    def __str__(self):
        return self.args[0]


class EmptyArmPoolError(BanditError, ValueError):
    pass


class DimensionMismatchError(BanditError, ValueError):
    def __init__(self, expected, got, what="context"):
        self.expected = expected
        self.got = got
        super().__init__(f"Invalid {what} dimension: expected {expected}, got {got}")


class NonFiniteValueError(BanditError, ValueError):
    pass


class InvalidPosteriorError(BanditError, ValueError):
    pass


class SingularMatrixError(BanditError, ValueError):
    pass


class ModelCollapseError(BanditError):
    """Every particle weight underflowed to zero."""


class TaxonomyError(BanditError, ValueError):
    pass


class EmptyTaxonomyError(TaxonomyError):
    pass


class MultipleRootsError(TaxonomyError):
    pass


class OrphanNodeError(TaxonomyError):
    pass


class CycleError(TaxonomyError):
    pass


class MultipleParentsError(TaxonomyError):
    pass


class InvalidPathError(TaxonomyError):
    pass


class EventLogFormatError(BanditError, ValueError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ConfigError(BanditError, ValueError):
    pass


class UndefinedMetricError(BanditError, ZeroDivisionError):
    pass
