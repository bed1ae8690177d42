"""Exception types carrying machine-readable error codes."""


class GibbsCmiError(Exception):
    """Base error. ``code`` is a short kebab-case identifier such as ``"empty-region"``."""

    exit_code = 3

    def __init__(self, code, message=None, **details):
        self.code = code
        self.details = details
        super().__init__(f"{code}: {message}" if message else code)


class RegionError(GibbsCmiError, ValueError):
    pass


class ModelError(GibbsCmiError, ValueError):
    pass


class NumericalError(GibbsCmiError, ArithmeticError):
    pass


class ConfigError(GibbsCmiError, ValueError):
    exit_code = 2
