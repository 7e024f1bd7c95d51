"""Exception types raised across the package."""


class CRFError(Exception):
    """Base class for all package errors."""


class StencilOutOfDomain(CRFError):
    """A finite-difference stencil point left the chart domain."""


class NonPositiveDeterminant(CRFError):
    """A metric determinant was zero or negative where a log was needed."""


class SingularMetric(CRFError):
    """A Hermitian form could not be inverted."""


class InvalidModelParameters(CRFError):
    """Model parameters violate the construction hypotheses."""


class TimeOutOfRange(CRFError):
    """A requested time lies outside the existence interval."""


class AnsatzNotPositive(CRFError):
    """An ansatz coefficient vector no longer defines a positive form."""


class BudgetExceeded(CRFError):
    """A step or sample budget was exhausted."""


class PositivityLost(CRFError):
    """The evolving torus metric stopped being positive definite."""


class Instability(CRFError):
    """A monitored energy increased beyond tolerance."""


class DisconnectedGraph(CRFError):
    """The neighbourhood graph has more than one component."""


class FamilyMismatch(CRFError):
    """An operation received a model of the wrong family."""


class NotAnIsometry(CRFError):
    """A permutation does not preserve the sampled distances."""


class ConfigError(CRFError):
    """An experiment configuration is malformed."""
