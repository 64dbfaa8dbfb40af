"""Exception hierarchy shared by every module."""


class NhGeoError(Exception):
    """Base class for all library errors."""


class NumericalError(NhGeoError):
    """A numerical routine could not produce a trustworthy value."""


class SingularMatrix(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class EvaluationFailure(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class ConstraintViolated(NumericalError):
    pass


class SingularSaddle(NumericalError):
    pass


class NotPhiSimple(NumericalError):
    def __init__(self, residual, threshold):
        super().__init__(f"gyroscopic pattern residual {residual:.3e} exceeds {threshold:.1e}")
        self.residual = residual
        self.threshold = threshold


class NonClosedForm(NumericalError):
    pass


class ShootingDiverged(NumericalError):
    pass


class InvalidParameters(NhGeoError, ValueError):
    pass
