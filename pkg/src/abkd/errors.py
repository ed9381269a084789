"""Exception hierarchy. Each class maps to one machine-parsable error category."""


class ABKDError(Exception):
    category = "error"


class InputValidationError(ABKDError, ValueError):
    category = "input"


class ParameterError(ABKDError, ValueError):
    category = "parameter"


class NumericOverflowError(ABKDError, ArithmeticError):
    category = "numeric"


class ConfigurationError(ABKDError, ValueError):
    category = "config"


class TrainingError(ABKDError, ArithmeticError):
    category = "numeric"


class DataError(ABKDError, ValueError):
    category = "data"
