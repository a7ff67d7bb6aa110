from sgswarm.exceptions import SgswarmError


class MarlError(SgswarmError):
    pass


class TrainingDiverged(MarlError, FloatingPointError):
    """A loss or parameter became NaN/Inf; the message carries episode and step."""


class TaskKindMismatch(MarlError, ValueError):
    pass


class CorruptSkillRecord(MarlError):
    pass
