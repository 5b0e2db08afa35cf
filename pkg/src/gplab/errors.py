"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, mixing spec, or parameter value."""


class NumericalError(ArithmeticError):
    """A computation left its valid numerical range."""


class BoundaryError(ValueError):
    """An interval was requested at a boundary estimate (alpha_hat in {0, 1})."""


class MembershipError(ValueError):
    """A subset does not belong to the admissible family of the local interval."""
