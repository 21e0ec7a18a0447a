"""Exception types raised by the toolkit."""


class QpsError(ValueError):
    """Base class for all numerical/validation errors in :mod:`qps`."""


class NonHermitianInput(QpsError):
    pass


class ConvergenceFailure(QpsError):
    pass


class NotPsd(QpsError):
    pass


class DimensionMismatch(QpsError):
    pass


class InvalidState(QpsError):
    pass


class DomainEdge(QpsError):
    pass


class ZeroProbability(QpsError):
    pass


class IndexOutOfRange(QpsError):
    pass


class NotQuasiPure(QpsError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class InvalidPovm(QpsError):
    pass


class IncompletePovm(InvalidPovm):
    pass


class NotAProjector(QpsError):
    pass


class LambdaOutOfRange(QpsError):
    pass


class NotUnitary(QpsError):
    pass


class ZeroSuccessProbability(QpsError):
    pass


class BadDecomposition(QpsError):
    pass


class NeedTwoParams(QpsError):
    pass


class NonPositiveInput(QpsError):
    pass


class TruncationInsufficient(QpsError):
    pass


class DimensionTooSmall(QpsError):
    pass
