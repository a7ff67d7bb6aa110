from sgswarm.exceptions import SgswarmError


class CliError(SgswarmError):
    pass


class FeatureStringError(CliError, ValueError):
    """A comma-separated feature string has the wrong arity or a non-number in it."""


class UnknownMetric(CliError, ValueError):
    pass
