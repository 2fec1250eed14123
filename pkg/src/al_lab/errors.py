"""Exception hierarchy shared by all al_lab modules."""


class ALLabError(Exception):
    """Base class for every error raised by al_lab."""


class ConfigError(ALLabError, ValueError):
    """Invalid user configuration (CLI exit code 2)."""


class NumericalError(ALLabError, ArithmeticError):
    """A numerical procedure failed (CLI exit code 3)."""


# lattice-core
class InvalidState(ALLabError, ValueError):
    pass


class DegenerateDenominator(NumericalError):
    pass


class SingularModeSystem(NumericalError):
    pass


class ZeroCarrier(NumericalError):
    pass


# floquet-spectrum
class ZeroSpectralParameter(ALLabError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class DegenerateHessian(NumericalError):
    pass


class NotSimpleCritical(NumericalError):
    pass


class BranchAmbiguity(NumericalError):
    pass


# darboux
class ZeroEigenfunction(NumericalError):
    pass


class EigenfunctionResidualTooLarge(NumericalError):
    pass


class PoleInLambda(NumericalError):
    pass


# melnikov
class ToleranceNotMet(NumericalError):
    pass


class DegenerateF1(NumericalError):
    pass


class NoRoot(NumericalError):
    pass


class DegenerateRoot(NumericalError):
    pass


# resonance
class ZeroModulus(NumericalError):
    pass


class NegativeModulus(NumericalError):
    pass


class BoundaryCase(NumericalError):
    pass


class ContinuationFailure(NumericalError):
    pass


class IndeterminateKind(NumericalError):
    pass


class NoSaddle(NumericalError):
    pass


# evolve
class StepSizeUnderflow(NumericalError):
    pass


class InsufficientDecade(NumericalError):
    pass
