from sgswarm.exceptions import SgswarmError


class OrchestratorError(SgswarmError):
    pass


class ScenarioError(OrchestratorError, ValueError):
    """A scenario cannot run with the given graph or skills."""


class UnresolvedSkill(OrchestratorError, KeyError):
    """A skill id has no loadable record behind it."""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class RegistryIntegrityError(OrchestratorError):

    def __init__(self, problems):
        self.problems = dict(problems)
        lines = [f"{skill_id}: {problem}" for skill_id, problem in sorted(self.problems.items())]
        super().__init__("Registry integrity check failed\n" + '\n'.join(lines))


class EmptyDecisionLog(OrchestratorError, ValueError):
    pass
