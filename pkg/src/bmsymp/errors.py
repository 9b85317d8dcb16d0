"""Exception hierarchy shared by all modules."""


class BmError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(BmError):
    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownCoordinateError(ParseError):
    pass


class SingularEvaluationError(BmError, ArithmeticError):
    """An atom was evaluated on its singular locus."""


class SeriesDomainError(BmError, ArithmeticError):
    """hyp2f1 argument outside the supported domain."""


class NotBmFunctionError(BmError):
    pass


class CoframeMismatchError(BmError):
    pass


class OrderMismatchError(BmError):
    """A dt-coefficient has a pole of order larger than m."""


class SingularMatrixError(BmError):
    pass


class NotClosedError(BmError):
    pass


class DecompositionError(BmError):
    pass


class NonConstantWeightError(BmError):
    pass


class NondegeneracyError(BmError):
    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message if witness is None else f"{message} at {witness}")


class NotInvariantError(BmError):
    pass


class AntiderivativeNotInTableError(BmError):
    pass


class ModelViolationError(BmError):
    pass


class ZeroHighestWeightError(BmError):
    pass


class LevelNotRegularError(BmError):
    pass


class NonModelActionError(BmError):
    pass


class AxiomViolationError(BmError):
    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message if witness is None else f"{message} at {witness}")


class NonabelianUnsupportedError(BmError):
    pass


class FusionMismatchError(BmError):
    pass


class ManifestError(BmError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
