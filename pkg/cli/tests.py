import json
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from cli.constants.cli_constants import EXIT_RUNTIME, EXIT_USAGE, MANIFEST_FILE
from cli.exceptions import FeatureStringError, UnknownMetric
from cli.manifest import RunManifest, inputs_digest
from cli.parsing import parse_env, parse_metrics, parse_task
from marl.constants.marl_constants import CURVE_FILE
from orchestrator.registry import open_registry
from skillgraph.bundle import load_graph
from skillgraph.constants.skillgraph_constants import RELATIONS_FILE
from skillgraph.dispatch import dispatch, query
from swarmsim.constants.swarmsim_constants import ADVERSARIAL, FIXED, FLOCKING
from swarmsim.features import EnvFeature, TaskFeature

LIBRARY = {
    'floc_3_fixed': '1,0,0.4,3',
    'floc_4_fixed': '1,0,0.8,3',
    'adve_2_fixed': '1,0,1,3,0.3',
    'adve_3_fixed': '1,0,1,4,0.3',
}

# per-stage skill sets declared by scenarios/three_stage.json
DECLARED = [('floc_3_fixed',), ('adve_2_fixed',), ('floc_3_fixed', 'floc_4_fixed')]
TINY_GRAPH = {'dim': 8, 'hidden_size': 16, 'hidden_layers': 2, 'iterations': 60, 'batch': 32}
TINY_TRAINING = {
    'skill_id': 'floc_3_fixed',
    'env': {'y': 1, 'L': 6},
    'task': [1, 0, 0.4, 3],
    'train': {'episodes': 3, 'episode_len': 5, 'batch': 4, 'buffer_size': 64, 'hidden_size': 8,
              'hidden_layers': 1, 'team_size': 3},
}


def sgswarm(*args):
    """Run the command; returns (stdout, stderr)."""
    out, err = StringIO(), StringIO()
    call_command('sgswarm', *[str(arg) for arg in args], stdout=out, stderr=err)
    return out.getvalue(), err.getvalue()


class WorkspaceMixin:

    def setUp(self):
        super().setUp()
        temp = tempfile.TemporaryDirectory()
        self.addCleanup(temp.cleanup)
        self.tmp = Path(temp.name)

    def write_json(self, name, data):
        path = self.tmp / name
        path.write_text(json.dumps(data))
        return path

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as caught:
            sgswarm(*args)
        self.assertEqual(caught.exception.returncode, code)
        return str(caught.exception)


class ParsingTests(SimpleTestCase):

    def test_task_kind_follows_arity(self):
        self.assertEqual(parse_task('1,0,0.4,3').kind, FLOCKING)
        self.assertEqual(parse_task('1, 0, 1, 3, 0.3').kind, ADVERSARIAL)
        self.assertEqual(parse_env('1,6'), EnvFeature(FIXED, 6.0))

    def test_wrong_arity_shows_what_is_expected(self):
        with self.assertRaises(FeatureStringError) as caught:
            parse_task('1,0,0.4')
        self.assertIn('4 values', str(caught.exception))
        self.assertIn('5 values', str(caught.exception))
        with self.assertRaises(FeatureStringError):
            parse_env('1,6,2')

    def test_non_numbers_are_rejected(self):
        with self.assertRaises(FeatureStringError):
            parse_task('1,0,fast,3')

    def test_metric_names(self):
        self.assertEqual(parse_metrics('', ('a', 'b')), ['a', 'b'])
        self.assertEqual(parse_metrics('b,a,b', ('a', 'b')), ['b', 'a'])
        with self.assertRaises(UnknownMetric):
            parse_metrics('a,c', ('a', 'b'))


class RunManifestTests(WorkspaceMixin, SimpleTestCase):

    def test_manifest_lists_outputs_and_hashes_inputs(self):
        config = self.write_json('config.json', {'a': 1})
        out = self.tmp / 'out'
        manifest = RunManifest.start('query', out, [config], [3])
        out.mkdir()
        (out / 'scores.csv').write_text('x\n')
        manifest.add_output(out / 'scores.csv')
        path = manifest.write()

        data = json.loads(path.read_text())
        self.assertEqual(path.name, MANIFEST_FILE)
        self.assertEqual(data['outputs'], ['scores.csv'])
        self.assertEqual(data['seeds'], [3])
        self.assertEqual(data['input_hash'], inputs_digest([config]))
        self.assertLessEqual(data['started'], data['finished'])
        self.assertEqual(sorted(p.name for p in out.iterdir()), [MANIFEST_FILE, 'scores.csv'])

    def test_input_hash_follows_content(self):
        config = self.write_json('config.json', {'a': 1})
        before = inputs_digest([config])
        self.write_json('config.json', {'a': 2})
        self.assertNotEqual(inputs_digest([config]), before)


class TrainSkillCommandTests(WorkspaceMixin, SimpleTestCase):

    def test_missing_config_is_a_usage_error(self):
        message = self.assertExitCode(EXIT_USAGE, 'train-skill', '--config', self.tmp / 'nope.json',
                                      '--out', self.tmp)
        self.assertIn('nope.json', message)

    def test_config_is_given_by_flag(self):
        config = self.write_json('train.json', TINY_TRAINING)
        message = self.assertExitCode(EXIT_USAGE, 'train-skill', config, '--out', self.tmp / 'out')
        self.assertIn('--config', message)

    def test_schema_error_names_the_key(self):
        config = self.write_json('train.json', {**TINY_TRAINING, 'train': {'batch': 0}})
        message = self.assertExitCode(EXIT_USAGE, 'train-skill', '--config', config, '--out', self.tmp / 'out')
        self.assertIn('train.batch', message)

    def test_same_seed_gives_identical_curves(self):
        config = self.write_json('train.json', TINY_TRAINING)
        sgswarm('train-skill', '--config', config, '--out', self.tmp / 'a', '--seed', 2)
        sgswarm('train-skill', '--config', config, '--out', self.tmp / 'b', '--seed', 2)

        first = (self.tmp / 'a' / 'floc_3_fixed' / CURVE_FILE).read_bytes()
        self.assertEqual(first, (self.tmp / 'b' / 'floc_3_fixed' / CURVE_FILE).read_bytes())
        self.assertEqual(len(first.decode().strip().splitlines()), 1 + 3)
        manifest = json.loads((self.tmp / 'a' / MANIFEST_FILE).read_text())
        self.assertIn(f"floc_3_fixed/{CURVE_FILE}", manifest['outputs'])


class GraphCommandTests(WorkspaceMixin, TestCase):

    def setUp(self):
        super().setUp()
        self.registry = self.tmp / 'registry'
        for skill_id, task in LIBRARY.items():
            sgswarm('registry', 'add', self.registry, '--placeholder', '--skill-id', skill_id,
                    '--env', '1,6', '--task', task)
        self.graph_config = self.write_json('graph.json', TINY_GRAPH)

    def build(self, name='graph', seed=0):
        sgswarm('build-graph', self.registry, '--config', self.graph_config, '--out', self.tmp / name,
                '--seed', seed)
        return self.tmp / name

    def test_registry_lists_added_skills(self):
        out, _ = sgswarm('registry', 'list', self.registry)
        self.assertEqual([line.split('\t')[0] for line in out.splitlines()], list(LIBRARY))
        self.assertIn('placeholder', out)

    def test_rebuild_with_same_seed_is_identical(self):
        first, second = self.build('a'), self.build('b')
        self.assertEqual((first / RELATIONS_FILE).read_bytes(), (second / RELATIONS_FILE).read_bytes())
        self.assertTrue((first / MANIFEST_FILE).is_file())

    def test_empty_registry_is_rejected(self):
        empty = open_registry(self.tmp / 'empty')
        message = self.assertExitCode(EXIT_USAGE, 'build-graph', empty.root, '--out', self.tmp / 'g')
        self.assertIn('holds no skills', message)
        self.assertExitCode(EXIT_USAGE, 'build-graph', self.tmp / 'nowhere', '--out', self.tmp / 'g')

    def test_reference_library_adds_placeholders_once(self):
        out, _ = sgswarm('registry', 'add', self.tmp / 'reference', '--reference-library')
        self.assertEqual(len(out.splitlines()), 32)
        self.assertIn('added floc_1_fixed (placeholder)', out)
        _, err = sgswarm('registry', 'add', self.tmp / 'reference', '--reference-library')
        self.assertEqual(len(err.splitlines()), 32)

    def test_query_prints_table_and_decision(self):
        bundle = self.build()
        out, _ = sgswarm('query', bundle, '--env', '1,6', '--task', '1,0,0.4,3', '--out', self.tmp / 'q')

        graph = load_graph(bundle)
        task = TaskFeature.from_values([1, 0, 0.4, 3])
        table = query(graph.model, EnvFeature(FIXED, 6.0), task)
        decision = dispatch(table.restricted(graph.kind_skill_ids(task.kind)))
        lines = out.splitlines()
        self.assertTrue(lines[1].startswith(table.top.skill_id))
        self.assertTrue(lines[-1].startswith(f"decision: {decision.band} {decision.top}"))
        self.assertEqual((self.tmp / 'q' / 'scores.csv').read_text(), table.csv_text())
        saved = json.loads((self.tmp / 'q' / 'decision.json').read_text())
        self.assertEqual(saved['decision'], decision.as_dict())

    def test_query_with_three_numbers_is_a_parse_error(self):
        message = self.assertExitCode(EXIT_USAGE, 'query', self.tmp / 'missing', '--env', '1,6', '--task', '1,0,0.4',
                                      '--out', self.tmp / 'q')
        self.assertIn('flocking', message)

    def test_query_always_writes_its_table(self):
        bundle = self.build()
        message = self.assertExitCode(EXIT_USAGE, 'query', bundle, '--env', '1,6', '--task', '1,0,0.4,3')
        self.assertIn('--out', message)
        sgswarm('query', bundle, '--env', '1,6', '--task', '1,0,1,3,0.3', '--out', self.tmp / 'q')
        manifest = json.loads((self.tmp / 'q' / MANIFEST_FILE).read_text())
        self.assertEqual(sorted(manifest['outputs']), ['decision.json', 'scores.csv'])

    def test_graph_eval_reports_gradient_checks(self):
        bundle = self.build()
        out, _ = sgswarm('eval', bundle, '--metrics', 'gradients,normals', '--out', self.tmp / 'e')
        lines = out.splitlines()
        self.assertEqual(len(lines), 5)
        self.assertTrue(all(line.startswith('PASS') for line in lines), out)
        rows = (self.tmp / 'e' / 'metrics.csv').read_text().splitlines()
        self.assertEqual(rows[0], 'metric,value,verdict')
        self.assertTrue(rows[1].startswith('gradients.0,'))

    def test_unknown_metric_is_a_usage_error(self):
        bundle = self.build()
        message = self.assertExitCode(EXIT_USAGE, 'eval', bundle, '--metrics', 'speed')
        self.assertIn('speed', message)

    def test_skill_eval_writes_metrics(self):
        skill = self.registry / 'skills' / 'adve_2_fixed'
        sgswarm('eval', skill, '--metrics', 'win_rate', '--episodes', 2, '--out', self.tmp / 'e')
        metric, value, verdict = (self.tmp / 'e' / 'metrics.csv').read_text().splitlines()[1].split(',')
        self.assertEqual((metric, verdict), ('win_rate', ''))
        self.assertTrue(0.0 <= float(value) <= 1.0)

    def test_verify_flags_altered_files(self):
        out, _ = sgswarm('registry', 'verify', self.registry)
        self.assertEqual(out.strip(), 'OK 4 skills')

        weights = self.registry / 'skills' / 'floc_3_fixed' / 'actor.netbin'
        data = bytearray(weights.read_bytes())
        data[0] ^= 1
        weights.write_bytes(bytes(data))
        message = self.assertExitCode(EXIT_RUNTIME, 'registry', 'verify', self.registry)
        self.assertIn('floc_3_fixed', message)

    def test_gc_reports_then_removes_orphans(self):
        orphan = self.registry / 'skills' / 'orphan'
        orphan.mkdir()
        out, _ = sgswarm('registry', 'gc', self.registry)
        self.assertIn('unreferenced skills/orphan', out)
        self.assertTrue(orphan.exists())
        sgswarm('registry', 'gc', self.registry, '--apply')
        self.assertFalse(orphan.exists())

    def test_fine_tuned_skill_needs_a_known_parent(self):
        self.assertExitCode(EXIT_USAGE, 'registry', 'add', self.registry, '--placeholder', '--skill-id', 'ft',
                            '--env', '1,6', '--task', '1,0,0.5,3', '--parent', 'floc_9_fixed')
        out, _ = sgswarm('registry', 'add', self.registry, '--placeholder', '--skill-id', 'ft',
                         '--env', '1,6', '--task', '1,0,0.5,3', '--parent', 'floc_3_fixed')
        self.assertIn('fine-tuned', out)

    def test_scenario_run_reports_success_rate(self):
        bundle = self.build()

        def stage(name, entry, values, expected):
            entry_data = {'task': values, 'expected': list(expected)}
            return {'name': name, 'entry': entry, 'teams': {'green': entry_data, 'red': entry_data}}

        scenario = self.write_json('duel.json', {
            'name': 'duel',
            'world': {
                'env': {'y': 1, 'L': 6},
                'teams': [
                    {'team': 'green', 'size': 1, 'center': [2.8, 3.0], 'speed': 0.5, 'jitter': 0.0},
                    {'team': 'red', 'size': 1, 'center': [3.0, 3.0], 'speed': 0.5, 'jitter': 0.0},
                ],
                'constants': {'hp_max': 1.0},
            },
            'stages': [
                stage('flock', 'start', [1, 0, 0.4, 3], DECLARED[0]),
                stage('battle', 'encounter', [1, 0, 1, 3, 0.3], DECLARED[1]),
                stage('regroup', 'team-eliminated', [1, 0, 0.6, 3], DECLARED[2]),
            ],
            'step_budget': 50,
            'final_stage_steps': 10,
        })
        run = self.tmp / 'run'
        out, _ = sgswarm('run-scenario', scenario, '--graph', bundle, '--registry', self.registry, '--out', run,
                         '--seeds', 2)

        decisions = [json.loads(line) for line in (run / 'decisions.jsonl').read_text().splitlines()]
        self.assertEqual(len(decisions), 6)
        for record in decisions:
            chosen = {member['skill'] for member in record['decision']['skills']}
            self.assertEqual(record['success'], chosen == set(DECLARED[record['stage']]))
        succeeded = sum(record['success'] for record in decisions)
        self.assertIn(f"rho_succ = {succeeded / 6:.2f} ({succeeded}/6 decisions over 2 runs)", out)
        self.assertEqual(len((run / 'stages.csv').read_text().splitlines()), 1 + 6)
        self.assertEqual(sorted(p.name for p in (run / 'trajectories').iterdir()),
                         ['trajectory_seed0.jsonl', 'trajectory_seed1.jsonl'])
        manifest = json.loads((run / MANIFEST_FILE).read_text())
        self.assertEqual(manifest['seeds'], [0, 1])
        self.assertIn('decisions.jsonl', manifest['outputs'])

    def test_bad_finetune_config_is_a_usage_error(self):
        bundle = self.build()
        scenario = Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json'
        overrides = self.write_json('finetune.json', {'gamma': 1.0})
        message = self.assertExitCode(EXIT_USAGE, 'run-scenario', scenario, '--graph', bundle,
                                      '--registry', self.registry, '--out', self.tmp / 'run',
                                      '--allow-finetune', '--finetune-config', overrides)
        self.assertIn('gamma', message)
        self.assertFalse((self.tmp / 'run').exists())

    def test_scenario_with_unknown_file_is_a_usage_error(self):
        bundle = self.build()
        self.assertExitCode(EXIT_USAGE, 'run-scenario', self.tmp / 'none.json', '--graph', bundle,
                            '--registry', self.registry, '--out', self.tmp / 'run')


@tag('slow')
class ReferenceScenarioCommandTests(WorkspaceMixin, TestCase):

    def test_default_scenario_succeeds_over_twenty_seeds(self):
        registry = self.tmp / 'reference'
        sgswarm('registry', 'add', registry, '--reference-library')
        sgswarm('build-graph', registry, '--out', self.tmp / 'graph', '--seed', 0)
        scenario = Path(settings.BASE_DIR) / 'scenarios' / 'three_stage.json'
        out, _ = sgswarm('run-scenario', scenario, '--graph', self.tmp / 'graph', '--registry', registry,
                         '--out', self.tmp / 'run', '--seeds', 20)
        self.assertIn('rho_succ = 1.00 (60/60 decisions over 20 runs)', out)
