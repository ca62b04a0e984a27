"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ``ValidationError`` -> 1,
``AudioFormatError`` and ``OSError`` -> 2, ``NumericalError`` -> 3.
"""


class ValidationError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class AudioFormatError(OSError):
    pass
