from sgswarm.exceptions import SgswarmError


class SwarmsimError(SgswarmError):
    pass


class DeadAgentError(SwarmsimError):
    """Perception or observation was requested for an eliminated robot."""


class ActionError(SwarmsimError, ValueError):
    """Actions passed to step() do not cover the living robots, or have the wrong length."""


class FeatureError(SwarmsimError, ValueError):
    """An environment or task feature is out of range or has the wrong arity."""
