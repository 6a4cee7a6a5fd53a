"""Exception hierarchy shared by every module of the package."""


class TreeRobustError(Exception):
    """Base class for all package errors."""


class InputError(TreeRobustError, ValueError):
    """Malformed user input (files, parameters, shapes)."""


class NumericError(TreeRobustError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class VerdictError(TreeRobustError):
    """An operation whose precondition is a market property that fails."""


# space
class NonUniformDepth(InputError):
    pass


class ProbabilitySumViolation(InputError):
    pass


class NonPositiveProbability(InputError):
    pass


class SizeMismatch(InputError):
    pass


class DepthOutOfRange(InputError):
    pass


# market
class AffineSupportNotLinear(VerdictError):
    pass


class UnknownModel(InputError, KeyError):
    pass


# arbitrage / emm
class ArbitrageAtNode(VerdictError):
    pass


class ArbitrageInModel(VerdictError):
    pass


class DegenerateSupport(VerdictError):
    pass


class DriftDominatesVolatility(InputError):
    pass


class BaseNotFullSupport(InputError):
    pass


# utility
class OutsideDomain(InputError):
    pass


class PointsOutsideDomain(InputError):
    pass


# optimizer / lp
class Infeasible(NumericError):
    pass


class Unbounded(NumericError):
    pass


class IterationLimit(NumericError):
    pass


class DomainViolationAtStart(InputError):
    pass


class TooManyDimensions(InputError):
    pass


# cli-level
class SchemaError(InputError):
    pass


class BadParameters(InputError):
    pass


class UnsupportedHorizon(InputError):
    pass


class NoConsistentPricingMeasure(VerdictError):
    pass


class ArbitrageInStockModel(VerdictError):
    pass
