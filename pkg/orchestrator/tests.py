import json
import tempfile
from dataclasses import replace
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, TestCase, tag

from marl.records import SkillRecord, placeholder_record
from orchestrator.constants.orchestrator_constants import (
    BUDGET, ENCOUNTER, FINAL_STEPS, GRAPH_QUERY, NEXT_STAGE, SCRIPTED, START, TEAM_ELIMINATED,
)
from orchestrator.exceptions import EmptyDecisionLog, RegistryIntegrityError, ScenarioError, UnresolvedSkill
from orchestrator.metrics import DecisionLog, DecisionRecord, decision_success_rate, write_stage_summaries
from orchestrator.models import RegisteredSkill
from orchestrator.registry import (
    RegistrySkills, open_registry, registry_add, registry_entries, registry_gc, registry_list, registry_verify,
)
from orchestrator.scenario import PolicySource, ScenarioSpec, StageSpec, run_scenario, run_scenarios
from orchestrator.serializers import ScenarioSerializer, load_scenario
from sgswarm.exceptions import ConfigError
from sgswarm.validation import validate_config
from skillgraph.bundle import SkillIndexEntry, build_graph
from skillgraph.constants.skillgraph_constants import REUSE
from skillgraph.dispatch import DispatchDecision
from skillgraph.samples import reference_facts
from swarmsim.constants.swarmsim_constants import FIXED, GREEN, RED
from swarmsim.export import TrajectoryWriter
from swarmsim.features import EnvFeature, TaskFeature
from swarmsim.world import TeamConfig, WorldConfig

ENV = EnvFeature(FIXED, 6.0)
FLOCK = TaskFeature.flocking(1.0, 0.0, 0.4, 3.0)
FIGHT = TaskFeature.adversarial(1.0, 0.0, 1.0, 3, 0.3)
REGROUP = TaskFeature.flocking(1.0, 0.0, 0.6, 3.0)

LIBRARY = {
    'floc_3_fixed': FLOCK,
    'floc_4_fixed': TaskFeature.flocking(1.0, 0.0, 0.8, 3.0),
    'adve_2_fixed': FIGHT,
    'adve_3_fixed': TaskFeature.adversarial(1.0, 0.0, 1.0, 4, 0.3),
}


def library_records():
    return {skill_id: placeholder_record(skill_id, ENV, task) for skill_id, task in LIBRARY.items()}


# per-stage skill sets declared by scenarios/three_stage.json
DECLARED = [('floc_3_fixed',), ('adve_2_fixed',), ('floc_3_fixed', 'floc_4_fixed')]


def graph_stage(name, entry, task, expected):
    source = PolicySource(GRAPH_QUERY, tuple(expected))
    return StageSpec(name, entry, {GREEN: task, RED: task}, {GREEN: source, RED: source})


def duel_spec(expected, final_stage_steps=10, **world_options):
    """
    One green robot tailing one red robot at equal speed. Both flock first; the encounter
    is immediate and with hp_max 1 the first hit of the fight eliminates red.
    """
    world = WorldConfig(
        env=ENV,
        teams=[
            TeamConfig(GREEN, FLOCK, 1, center=(2.8, 3.0), heading=(1.0, 0.0), speed=0.5, jitter=0.0),
            TeamConfig(RED, FLOCK, 1, center=(3.0, 3.0), heading=(1.0, 0.0), speed=0.5, jitter=0.0),
        ],
        hp_max=world_options.pop('hp_max', 1.0),
        **world_options,
    )
    stages = [
        graph_stage('flock', START, FLOCK, expected[0]),
        graph_stage('battle', ENCOUNTER, FIGHT, expected[1]),
        graph_stage('regroup', TEAM_ELIMINATED, REGROUP, expected[2]),
    ]
    return ScenarioSpec('duel', world, stages, step_budget=50, final_stage_steps=final_stage_steps)


def scripted_stage(name, entry, task):
    source = PolicySource(SCRIPTED)
    return StageSpec(name, entry, {GREEN: task, RED: task}, {GREEN: source, RED: source})


class ScenarioTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        entries = [SkillIndexEntry(skill_id, ENV, task) for skill_id, task in LIBRARY.items()]
        cls.graph = build_graph(entries, dim=8, hidden_size=16, hidden_layers=2, iterations=60, batch=32, seed=0)
        cls.skills = library_records()
        cls.expected = DECLARED

    def test_three_stages_log_three_decisions(self):
        run = run_scenario(duel_spec(self.expected), self.skills, self.graph, seed=0)
        self.assertFalse(run.truncated)
        self.assertEqual([d.stage_name for d in run.decisions], ['flock', 'battle', 'regroup'])
        self.assertEqual([d.tick for d in run.decisions], [0, 1, 2])
        self.assertEqual(run.decisions[2].teams, (GREEN,))
        self.assertEqual([d.expected for d in run.decisions], DECLARED)
        flocking = {'floc_3_fixed', 'floc_4_fixed'}
        self.assertLessEqual(set(run.decisions[0].decision.skill_ids), flocking)
        self.assertLessEqual(set(run.decisions[1].decision.skill_ids), {'adve_2_fixed', 'adve_3_fixed'})
        self.assertLessEqual(set(run.decisions[2].decision.skill_ids), flocking)

    def test_stage_summaries_follow_the_fight(self):
        run = run_scenario(duel_spec(self.expected, final_stage_steps=10), self.skills, self.graph, seed=0)
        self.assertEqual([s.exit_reason for s in run.stages], [NEXT_STAGE, NEXT_STAGE, FINAL_STEPS])
        battle = run.stages[1]
        self.assertEqual((battle.entry_tick, battle.exit_tick), (1, 2))
        self.assertEqual((battle.alive_green, battle.alive_red), (1, 0))
        self.assertEqual(run.stages[2].steps, 10)
        self.assertEqual(run.final_tick, 12)

    def test_wrong_expectation_counts_as_failure(self):
        # dispatch stays within the stage task's kind
        expected = [('adve_3_fixed',), ('floc_4_fixed',), ('adve_2_fixed',)]
        run = run_scenario(duel_spec(expected), self.skills, self.graph, seed=0)
        self.assertEqual([d.success for d in run.decisions], [False, False, False])
        self.assertEqual(decision_success_rate(run.decisions), 0.0)

    def test_runs_are_deterministic(self):
        first = run_scenario(duel_spec(self.expected), self.skills, self.graph, seed=4)
        second = run_scenario(duel_spec(self.expected), self.skills, self.graph, seed=4)
        self.assertEqual(first.decisions.as_dicts(), second.decisions.as_dicts())
        self.assertEqual(first.stages, second.stages)

    def test_threaded_runs_match_sequential_runs(self):
        spec = duel_spec(self.expected)
        sequential = run_scenarios(spec, self.skills, self.graph, seeds=range(3))
        threaded = run_scenarios(spec, self.skills, self.graph, seeds=range(3), threads=2)
        self.assertEqual([r.decisions.as_dicts() for r in sequential], [r.decisions.as_dicts() for r in threaded])

    def test_missing_skill_is_unresolved(self):
        skills = library_records()
        del skills['adve_2_fixed']
        with self.assertRaises(UnresolvedSkill):
            run_scenarios(duel_spec(self.expected), skills, self.graph, seeds=[0])

    def test_unreached_stage_truncates_with_diagnostic(self):
        world = WorldConfig(env=ENV, teams=[
            TeamConfig(GREEN, FLOCK, 1, center=(0.5, 0.5), jitter=0.0),
            TeamConfig(RED, FLOCK, 1, center=(5.5, 5.5), jitter=0.0),
        ])
        far = TaskFeature.flocking(1.0, 0.0, 0.4, 1.0)
        spec = ScenarioSpec('apart', world, [scripted_stage('wait', START, far),
                                             scripted_stage('meet', ENCOUNTER, FIGHT)], step_budget=20)
        run = run_scenario(spec, {}, self.graph, seed=0)
        self.assertTrue(run.truncated)
        self.assertIn("'meet'", run.diagnostic)
        self.assertEqual(run.stages[-1].exit_reason, BUDGET)
        self.assertEqual(run.final_tick, 20)
        self.assertEqual(len(run.decisions), 0)

    def test_budget_counts_from_stage_entry(self):
        # head-on at a closing speed of 0.1 m per tick; they meet near tick 30
        world = WorldConfig(env=ENV, teams=[
            TeamConfig(GREEN, FLOCK, 1, center=(1.0, 3.0), heading=(1.0, 0.0), speed=0.5, jitter=0.0),
            TeamConfig(RED, FLOCK, 1, center=(5.0, 3.0), heading=(-1.0, 0.0), speed=0.5, jitter=0.0),
        ])
        near = TaskFeature.flocking(1.0, 0.0, 0.4, 1.0)
        spec = ScenarioSpec('late', world, [scripted_stage('approach', START, near),
                                            scripted_stage('meet', ENCOUNTER, FIGHT),
                                            scripted_stage('after', TEAM_ELIMINATED, REGROUP)], step_budget=20)
        run = run_scenario(spec, {}, self.graph, seed=0)

        approach, meet = run.stages
        self.assertEqual(approach.exit_reason, NEXT_STAGE)
        self.assertGreater(meet.entry_tick, spec.step_budget)
        self.assertEqual(meet.exit_reason, BUDGET)
        self.assertEqual(meet.exit_tick - meet.entry_tick, spec.step_budget)
        self.assertEqual(run.final_tick, meet.entry_tick + spec.step_budget)
        self.assertIn("'after'", run.diagnostic)

    def test_symmetric_scripted_fight_mirrors(self):
        world = WorldConfig(env=ENV, teams=[
            TeamConfig(GREEN, FIGHT, 1, center=(2.5, 3.0), heading=(1.0, 0.0), speed=0.3, jitter=0.0),
            TeamConfig(RED, FIGHT, 1, center=(3.5, 3.0), heading=(-1.0, 0.0), speed=0.3, jitter=0.0),
        ])
        spec = ScenarioSpec('mirror', world, [scripted_stage('fight', START, FIGHT)], final_stage_steps=60)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'trajectory.jsonl'
            with TrajectoryWriter(path) as writer:
                run_scenario(spec, {}, self.graph, seed=0, trajectory=writer)
            records = [json.loads(line) for line in path.read_text().splitlines()]

        self.assertEqual(len(records), 61)
        for record in records:
            green, red = sorted(record['agents'], key=lambda agent: agent['team'])
            self.assertAlmostEqual(green['p'][0], 6.0 - red['p'][0], places=9)
            self.assertAlmostEqual(green['p'][1], red['p'][1], places=9)
            self.assertAlmostEqual(green['v'][0], -red['v'][0], places=9)
            self.assertAlmostEqual(green['hp'], red['hp'], places=9)

    def test_first_stage_must_start(self):
        with self.assertRaises(ScenarioError):
            ScenarioSpec('bad', duel_spec(self.expected).world, [scripted_stage('late', ENCOUNTER, FLOCK)])

    def test_untrained_graph_is_rejected(self):
        graph = replace(self.graph, model=replace(self.graph.model, trained=False))
        with self.assertRaises(ScenarioError):
            run_scenario(duel_spec(self.expected), self.skills, graph)


class ScenarioFileTests(SimpleTestCase):

    def test_default_scenario_loads(self):
        spec = load_scenario(Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json')
        self.assertEqual([stage.entry for stage in spec.stages], [START, ENCOUNTER, TEAM_ELIMINATED])
        self.assertEqual([team.size for team in spec.world.teams], [10, 10])
        self.assertEqual([spec.stages[i].policies[GREEN].expected for i in range(3)], DECLARED)
        self.assertEqual(spec.stages[1].policies[RED].kind, SCRIPTED)
        self.assertEqual(spec.world.teams[0].task, FLOCK)

    def test_schema_error_names_the_key(self):
        data = json.loads((Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json').read_text())
        data['stages'][0]['teams']['green']['expected'] = []
        with self.assertRaises(ConfigError) as cm:
            validate_config(ScenarioSerializer, data)
        self.assertIn('stages.0.teams.green.expected', str(cm.exception))

    def test_later_stage_cannot_restart(self):
        data = json.loads((Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json').read_text())
        data['stages'][1]['entry'] = START
        with self.assertRaises(ConfigError):
            validate_config(ScenarioSerializer, data)


class DecisionMetricTests(SimpleTestCase):

    @staticmethod
    def decision(chosen, expected):
        return DecisionRecord(0, 0, 'stage', 0, (GREEN,), (1.0, 6.0), (1.0, 0.0, 0.4, 3.0), 'digest',
                              DispatchDecision(REUSE, ((chosen, 1.0),)), (expected,))

    def test_all_matches(self):
        log = DecisionLog([self.decision('a', 'a')] * 3)
        self.assertEqual(decision_success_rate(log), 1.0)

    def test_three_of_four(self):
        log = DecisionLog([self.decision('a', 'a')] * 3 + [self.decision('a', 'b')])
        self.assertEqual(decision_success_rate(log), 0.75)

    def test_empty_log(self):
        with self.assertRaises(EmptyDecisionLog):
            decision_success_rate(DecisionLog())

    def test_outputs(self):
        log = DecisionLog([self.decision('a', 'a'), self.decision('a', 'b')])
        with tempfile.TemporaryDirectory() as tmp:
            lines = log.write_jsonl(Path(tmp) / 'decisions.jsonl').read_text().splitlines()
            self.assertEqual([json.loads(line)['success'] for line in lines], [True, False])
            path = write_stage_summaries(Path(tmp) / 'stages.csv', [])
            self.assertEqual(path.read_text().splitlines()[0].split(',')[0], 'seed')


class RegistryTests(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.registry = open_registry(self.tmp.name)
        self.records = library_records()

    def test_add_then_list(self):
        registry_add(self.registry, self.records['floc_3_fixed'])
        skills = list(registry_list(self.registry))
        self.assertEqual([s.skill_id for s in skills], ['floc_3_fixed'])
        self.assertEqual(skills[0].provenance, 'trained')
        self.assertTrue(skills[0].placeholder)
        self.assertIn('skill.meta', skills[0].file_hashes)

    def test_ids_are_unique(self):
        registry_add(self.registry, self.records['floc_3_fixed'])
        second = registry_add(self.registry, self.records['floc_3_fixed'])
        self.assertEqual(second.skill_id, 'floc_3_fixed-2')
        with self.assertRaises(ValueError):
            registry_add(self.registry, self.records['floc_4_fixed'], skill_id='floc_3_fixed')

    def test_verify_detects_flipped_bit(self):
        registry_add(self.registry, self.records['floc_3_fixed'])
        registry_add(self.registry, self.records['adve_2_fixed'])
        self.assertEqual(registry_verify(self.registry), ['floc_3_fixed', 'adve_2_fixed'])

        weights = Path(self.tmp.name) / 'skills' / 'adve_2_fixed' / 'actor.netbin'
        data = bytearray(weights.read_bytes())
        data[3] ^= 0x01
        weights.write_bytes(bytes(data))
        with self.assertRaises(RegistryIntegrityError) as cm:
            registry_verify(self.registry)
        self.assertEqual(list(cm.exception.problems), ['adve_2_fixed'])
        self.assertIn('adve_2_fixed', str(cm.exception))

    def test_fine_tuned_chain_resolves_to_root(self):
        registry_add(self.registry, self.records['floc_4_fixed'])
        child = registry_add(self.registry, self.records['floc_4_fixed'], skill_id='floc_d1', parent_id='floc_4_fixed')
        grandchild = registry_add(self.registry, self.records['floc_4_fixed'], skill_id='floc_d1b', parent_id='floc_d1')
        self.assertEqual(child.provenance, 'fine-tuned')
        self.assertEqual([s.skill_id for s in grandchild.lineage()], ['floc_d1b', 'floc_d1', 'floc_4_fixed'])
        self.assertEqual(SkillRecord.load(grandchild.directory).parent_id, 'floc_d1')

    def test_unknown_parent(self):
        with self.assertRaises(RegisteredSkill.DoesNotExist):
            registry_add(self.registry, self.records['floc_3_fixed'], parent_id='nope')

    def test_parent_must_share_task_kind(self):
        registry_add(self.registry, self.records['floc_3_fixed'])
        with self.assertRaises(ValueError):
            registry_add(self.registry, self.records['adve_2_fixed'], parent_id='floc_3_fixed')

    def test_gc_defaults_to_dry_run(self):
        registry_add(self.registry, self.records['floc_3_fixed'])
        root = Path(self.tmp.name) / 'skills'
        (root / 'orphan').mkdir()
        (root / 'orphan' / 'actor.netbin').write_bytes(b'\0' * 8)
        (root / 'floc_3_fixed' / 'stale.netbin').write_bytes(b'\0' * 8)

        found = registry_gc(self.registry)
        self.assertEqual([p.name for p in found], ['stale.netbin', 'orphan'])
        self.assertTrue((root / 'orphan').exists())

        registry_gc(self.registry, dry_run=False)
        self.assertFalse((root / 'orphan').exists())
        self.assertFalse((root / 'floc_3_fixed' / 'stale.netbin').exists())
        self.assertEqual(registry_verify(self.registry), ['floc_3_fixed'])

    def test_registry_view_loads_records(self):
        registry_add(self.registry, self.records['adve_2_fixed'])
        skills = RegistrySkills(self.registry)
        self.assertEqual(skills['adve_2_fixed'].task, FIGHT)
        self.assertIn('adve_2_fixed', skills)
        with self.assertRaises(UnresolvedSkill):
            skills['floc_3_fixed']

    def test_entries_follow_registration_order(self):
        for skill_id in ('floc_4_fixed', 'adve_2_fixed'):
            registry_add(self.registry, self.records[skill_id])
        entries = registry_entries(self.registry)
        self.assertEqual([e.skill_id for e in entries], ['floc_4_fixed', 'adve_2_fixed'])
        self.assertEqual(entries[1].task, FIGHT)


@tag('slow')
class ReferenceScenarioTests(TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        facts = reference_facts()
        cls.graph = build_graph([SkillIndexEntry(f.skill_id, f.env, f.task) for f in facts], seed=0)

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        registry = open_registry(self.tmp.name)
        for fact in reference_facts():
            registry_add(registry, placeholder_record(fact.skill_id, fact.env, fact.task), fact.skill_id)
        self.skills = RegistrySkills(registry)

    def test_in_library_decisions_all_succeed(self):
        log = DecisionLog()
        for run in run_scenarios(duel_spec(DECLARED), self.skills, self.graph, seeds=range(20)):
            self.assertEqual(len(run.decisions), 3)
            log.extend(run.decisions)
        self.assertEqual(decision_success_rate(log), 1.0)

    def test_three_stage_scenario_over_twenty_seeds(self):
        spec = load_scenario(Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json')
        self.assertEqual([team.size for team in spec.world.teams], [10, 10])
        log = DecisionLog()
        for run in run_scenarios(spec, self.skills, self.graph, seeds=range(20)):
            self.assertFalse(run.truncated, run.diagnostic)
            self.assertEqual([d.stage_name for d in run.decisions], ['approach', 'battle', 'regroup'])
            self.assertEqual(run.decisions[1].teams, (GREEN,))
            log.extend(run.decisions)
        self.assertEqual(len(log), 60)
        self.assertEqual(decision_success_rate(log), 1.0)
