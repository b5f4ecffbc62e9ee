"""Exception types raised across the package."""


class ISDLError(Exception):
    """Base class for all package errors."""


class ShapeError(ISDLError, ValueError):
    """Array dimensions do not agree with what an operation expects."""


class EmptyDataset(ISDLError, ValueError):
    pass


class InvalidRatios(ISDLError, ValueError):
    pass


class InvalidSpec(ISDLError, ValueError):
    pass


class UnknownDiagnosis(ISDLError, KeyError):
    def __init__(self, raw, year):
        self.raw = raw
        self.year = year
        super().__init__(f"unmapped diagnosis {raw!r} for year {year}")

    def __str__(self):
        return self.args[0]


class DivergenceError(ISDLError, FloatingPointError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


class DegenerateCounts(ISDLError, ValueError):
    """The majority class count is zero, so sampling proportions are undefined."""


class UndefinedAUC(ISDLError, ValueError):
    """Only one class is present among the truth labels."""


class RankDeficient(ISDLError, ArithmeticError):
    pass


class BudgetExceeded(ISDLError, ValueError):
    pass


class ConstraintCoalition(ISDLError, ValueError):
    """Empty and full coalitions carry no kernel weight; they are solve constraints."""


class ConfigError(ISDLError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
