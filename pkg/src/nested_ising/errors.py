"""Exception types raised across the package."""


class NestedIsingError(Exception):
    """Base class for all package errors."""


class InvalidLayout(NestedIsingError, ValueError):
    pass


class InvalidConfig(NestedIsingError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid model config: " + "; ".join(self.violations))


class TooManyLinks(NestedIsingError, ValueError):
    pass


class TooLarge(NestedIsingError, ValueError):
    pass


class IndexOutOfRange(NestedIsingError, IndexError):
    pass


class NonUnitaryGate(NestedIsingError, ValueError):
    pass


class DimensionMismatch(NestedIsingError, ValueError):
    pass


class WrongDimension(NestedIsingError, ValueError):
    pass


class NumericalFailure(NestedIsingError, ArithmeticError):
    pass


class DegenerateFit(NestedIsingError, ValueError):
    pass
