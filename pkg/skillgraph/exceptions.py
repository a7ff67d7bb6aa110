from sgswarm.exceptions import SgswarmError


class SkillgraphError(SgswarmError):
    pass


class EmptyScoreTable(SkillgraphError, ValueError):
    pass


class MixedSkillKinds(SkillgraphError, ValueError):
    """Blend members must share a task kind and observation layout."""


class GraphTrainingDiverged(SkillgraphError, FloatingPointError):
    pass


class CorruptGraphBundle(SkillgraphError):
    pass


class UnknownSkill(SkillgraphError, KeyError):
    pass
