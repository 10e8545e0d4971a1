import numpy as np


# creating the exception hierarchy used across the package
class SalaryMatchException(Exception):
    pass


class ValidationException(SalaryMatchException):
    pass


class NumericalException(SalaryMatchException):
    pass


class NonFiniteInputException(ValidationException):
    pass


class ParamsOutOfRangeException(ValidationException):
    pass


class InvalidGridException(ValidationException):
    pass


class BinMismatchException(ValidationException):
    pass


class EmptyInputException(ValidationException):
    pass


class MalformedRowException(ValidationException):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ConfigException(ValidationException):
    pass


class BandwidthException(ValidationException):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PlaceboWeightsException(ValidationException):
    def __init__(self, message, w0=None):
        super().__init__(message)
        self.w0 = w0


class UndefinedDerivativeException(ValidationException):
    pass


class DegreesOfFreedomException(ValidationException):
    pass


class MillsRatioException(NumericalException):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class RootNotFoundException(NumericalException):
    def __init__(self, message, phi=None, bracket=None):
        super().__init__(message)
        self.phi = phi
        self.bracket = bracket


class QuadratureException(NumericalException):
    def __init__(self, message, abserr=None):
        super().__init__(message)
        self.abserr = abserr


class EstimationFailedException(NumericalException):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UnderIdentifiedException(NumericalException):
    pass


class CriterionOrderingException(NumericalException):
    pass


# method to check if input values are finite
def check_finite(name, values):
    """Tests that the given value(s) contain no NaN or infinite entries.

    Arguments:
        name::str- Name of the checked quantity, used in the error message
        values::float or np.ndarray- Value(s) to check

    Returns:
        None- Throws an exception in case any entry is NaN or infinite.
    """
    try:
        assert np.all(np.isfinite(values))
    except AssertionError:
        bad = np.asarray(values, dtype=float)
        first = bad[~np.isfinite(bad)].flat[0] if bad.ndim else bad
        raise NonFiniteInputException(f"{name} must be finite, got {first}")


# method to assert a value is strictly positive
def check_positive(name, value):
    """Tests that a scalar is finite and strictly positive.

    Arguments:
        name::str- Name of the checked quantity
        value::float- Value to check

    Returns:
        None- Throws an exception if value <= 0 or not finite.
    """
    check_finite(name, value)
    try:
        assert value > 0
    except AssertionError:
        raise ParamsOutOfRangeException(f"{name} must be > 0, got {value}")


# method to assert a value lies at or above a lower limit
def check_at_least(name, value, lower_limit):
    """Tests that a scalar is finite and not below lower_limit.

    Arguments:
        name::str- Name of the checked quantity
        value::float- Value to check
        lower_limit::float- Smallest admissible value

    Returns:
        None- Throws an exception if value < lower_limit.
    """
    check_finite(name, value)
    try:
        assert value >= lower_limit
    except AssertionError:
        raise ParamsOutOfRangeException(
            f"{name} must be >= {lower_limit}, got {value}")


# method to assert a value is a probability strictly inside (0, 1)
def check_probability(name, value):
    """Tests that a scalar lies strictly between 0 and 1.

    Arguments:
        name::str- Name of the checked quantity
        value::float- Value to check

    Returns:
        None- Throws an exception if value is outside (0, 1).
    """
    check_finite(name, value)
    try:
        assert 0 < value < 1
    except AssertionError:
        raise ParamsOutOfRangeException(f"{name} must lie in (0, 1), got {value}")


# method to assert an input sequence is not empty
def check_not_empty(name, values):
    """Tests that a sequence holds at least one element.

    Arguments:
        name::str- Name of the checked input
        values::sequence- Input to check

    Returns:
        None- Throws an exception if the input is empty.
    """
    try:
        assert np.size(values) > 0
    except AssertionError:
        raise EmptyInputException(f"{name} must not be empty")
