"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the CLI copies into
its error JSON.
"""


class SaddleFoldError(Exception):
    code = "error"


class UnsupportedDimension(SaddleFoldError, ValueError):
    code = "unsupported-dimension"


class GridTooCoarse(SaddleFoldError, ValueError):
    code = "grid-too-coarse"


class ShapeError(SaddleFoldError, ValueError):
    code = "shape-error"


class ConeViolation(SaddleFoldError, ValueError):
    code = "cone-violation"


class InvalidExponent(SaddleFoldError, ValueError):
    code = "invalid-exponent"


class InvariantViolation(SaddleFoldError, ValueError):
    code = "invariant-violation"


class DenominatorDegenerate(SaddleFoldError, ArithmeticError):
    code = "denominator-degenerate"


class SolverError(SaddleFoldError, RuntimeError):
    """Base for iterative solver failures; ``state`` holds the last iterate if any."""

    code = "solver-failure"

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class MaxIterationsExceeded(SolverError):
    code = "max-iterations-exceeded"


class ConeExit(SolverError):
    code = "cone-exit"


class SingularJacobian(SolverError):
    code = "singular-jacobian"


class Stall(SolverError):
    code = "stall"


class EigenNonconvergence(SolverError):
    code = "eigen-nonconvergence"


class CorrectorFailure(SolverError):
    code = "corrector-failure"

    def __init__(self, message, state=None, branch=None):
        super().__init__(message, state)
        self.branch = branch


class AugmentedSingularity(SolverError):
    code = "augmented-singularity"


class ProbeInconclusive(SaddleFoldError, RuntimeError):
    code = "probe-inconclusive"


class NoFoldFound(SaddleFoldError, LookupError):
    code = "no-fold-found"


class CriteriaDisagree(SaddleFoldError, RuntimeError):
    code = "criteria-disagree"

    def __init__(self, message, eigen_brackets=(), tangent_brackets=()):
        super().__init__(message)
        self.eigen_brackets = list(eigen_brackets)
        self.tangent_brackets = list(tangent_brackets)


class InsufficientPoints(SaddleFoldError, ValueError):
    code = "insufficient-points"


class ConfigError(SaddleFoldError, ValueError):
    code = "config-error"


class UnknownKey(ConfigError):
    code = "unknown-key"


class ConfigTypeError(ConfigError):
    code = "type-error"
