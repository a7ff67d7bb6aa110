import json
import logging
import math
from pathlib import Path

import numpy as np
from django.core.exceptions import ObjectDoesNotExist
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from cli.constants.cli_constants import (
    BUILD_GRAPH, DECISION_FILE, DEFAULT_EVAL_EPISODES, DEFAULT_TABLE_ROWS, EVAL, EXIT_RUNTIME, EXIT_USAGE, FAIL,
    FINETUNED_DIR, GRADIENT_DIRECTIONS, GRADIENT_SAMPLE_LIMIT, GRADIENT_TOLERANCE, GRADIENTS, GRAPH_METRICS,
    METRIC_FIELDS, METRICS_FILE, NORMAL_TOLERANCE, NORMALS, PASS, QUALITY, QUALITY_FLOORS, QUERY, REGISTRY,
    REGISTRY_ADD, REGISTRY_GC, REGISTRY_LIST, REGISTRY_VERIFY, RUN_SCENARIO, SCORES_FILE, SKILL_METRICS,
    TRAIN_SKILL, TRAJECTORY_DIR,
)
from cli.exceptions import CliError
from cli.manifest import RunManifest
from cli.parsing import UsageParser, add_subcommand, load_json, parse_env, parse_metrics, parse_task
from marl.background.tasks import train_skill_job
from marl.constants.marl_constants import SKILL_META_FILE
from marl.exceptions import CorruptSkillRecord
from marl.records import SkillRecord, placeholder_record
from marl.serializers import TrainConfigSerializer, TrainSkillConfigSerializer
from marl.trainer import evaluate_skill, training_world_config
from orchestrator.constants.orchestrator_constants import DECISION_LOG_FILE, STAGE_SUMMARY_FILE
from orchestrator.metrics import DecisionLog, decision_success_rate, write_stage_summaries
from orchestrator.registry import (
    RegistrySkills, open_registry, registry_add, registry_entries, registry_gc, registry_list, registry_verify,
)
from orchestrator.scenario import run_scenarios
from orchestrator.serializers import load_scenario
from sgswarm.exceptions import ConfigError, SgswarmError
from sgswarm.validation import validate_config
from skillgraph.bundle import build_graph, load_graph, save_graph
from skillgraph.constants.skillgraph_constants import GRAPH_META_FILE
from skillgraph.dispatch import dispatch, query
from skillgraph.exceptions import CorruptGraphBundle
from skillgraph.samples import build_samples, reference_facts
from skillgraph.serializers import GraphConfigSerializer, build_options
from skillgraph.training import directional_gradient_check, graph_quality
from swarmsim.exceptions import FeatureError
from swarmsim.serializers import WorldConfigSerializer, world_config_from_data

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, CliError, FeatureError, CorruptGraphBundle, CorruptSkillRecord, FileNotFoundError,
                ObjectDoesNotExist)


def _fmt(value):
    return 'nan' if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.4f}"


class Command(BaseCommand):
    help = 'Train skills, build and query the skill graph, run scenarios and manage the skill registry.'

    def add_arguments(self, parser):
        commands = parser.add_subparsers(dest='subcommand', required=True, parser_class=UsageParser)

        train = add_subcommand(commands, parser, TRAIN_SKILL, help='Train one skill from a JSON training config.')
        train.add_argument('--config', required=True, help='Training config JSON.')
        train.add_argument('--out', required=True)
        train.add_argument('--seed', type=int, default=0)
        train.add_argument('--warm-start', dest='warm_start', help='Skill directory to fine-tune from.')

        graph = add_subcommand(commands, parser, BUILD_GRAPH, help='Build a skill graph bundle over a registry.')
        graph.add_argument('registry')
        graph.add_argument('--config', help='Graph config JSON; settings defaults otherwise.')
        graph.add_argument('--out', required=True)
        graph.add_argument('--seed', type=int, default=0)

        ask = add_subcommand(commands, parser, QUERY, help='Score every skill for an environment and task.')
        ask.add_argument('bundle')
        ask.add_argument('--env', required=True, help='y,L')
        ask.add_argument('--task', required=True, help='v_max,v_min,d_ref,r_perc or v_max,v_min,delta_h,n_o,r_atta')
        ask.add_argument('--out', required=True)
        ask.add_argument('--top', type=int, default=DEFAULT_TABLE_ROWS)

        scenario = add_subcommand(commands, parser, RUN_SCENARIO,
                                  help='Run a multi-stage scenario over several seeds.')
        scenario.add_argument('spec')
        scenario.add_argument('--graph', required=True)
        scenario.add_argument('--registry', required=True)
        scenario.add_argument('--out', required=True)
        scenario.add_argument('--seeds', type=int, default=1, help='Number of seeded runs.')
        scenario.add_argument('--seed', type=int, default=0, help='First seed.')
        scenario.add_argument('--threads', type=int, default=1)
        scenario.add_argument('--allow-finetune', dest='allow_finetune', action='store_true')
        scenario.add_argument('--finetune-config', dest='finetune_config',
                              help='JSON of training overrides used when fine-tuning.')

        evaluate = add_subcommand(commands, parser, EVAL,
                                  help='Evaluate a skill directory or check a graph bundle.')
        evaluate.add_argument('target')
        evaluate.add_argument('--metrics', default='')
        evaluate.add_argument('--episodes', type=int, default=DEFAULT_EVAL_EPISODES)
        evaluate.add_argument('--seed', type=int, default=0)
        evaluate.add_argument('--world', help='World config JSON for skill rollouts.')
        evaluate.add_argument('--out')

        registry = add_subcommand(commands, parser, REGISTRY, help='Manage a skill registry.')
        actions = registry.add_subparsers(dest='action', required=True)
        add = add_subcommand(actions, registry, REGISTRY_ADD)
        add.add_argument('registry')
        add.add_argument('source', nargs='?', help='Skill directory to register.')
        add.add_argument('--skill-id', dest='skill_id')
        add.add_argument('--parent')
        add.add_argument('--placeholder', action='store_true')
        add.add_argument('--env')
        add.add_argument('--task')
        add.add_argument('--reference-library', dest='reference_library', action='store_true')
        for name in (REGISTRY_LIST, REGISTRY_VERIFY):
            add_subcommand(actions, registry, name).add_argument('registry')
        gc = add_subcommand(actions, registry, REGISTRY_GC)
        gc.add_argument('registry')
        gc.add_argument('--apply', action='store_true')

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        handler = getattr(self, 'handle_' + subcommand.replace('-', '_'))
        try:
            handler(options)
        except CommandError:
            raise
        except USAGE_ERRORS as e:
            raise CommandError(str(e), returncode=EXIT_USAGE)
        except DatabaseError as e:
            raise CommandError(f"Registry database unavailable ({e}); run `manage.py migrate` first",
                               returncode=EXIT_USAGE)
        except (SgswarmError, ValueError, KeyError) as e:
            logger.debug("%s failed", subcommand, exc_info=True)
            raise CommandError(str(e), returncode=EXIT_RUNTIME)

    def handle_train_skill(self, options):
        config_path = options['config']
        data = load_json(config_path)
        skill_id = validate_config(TrainSkillConfigSerializer, data)['skill_id']
        out = Path(options['out'])
        manifest = RunManifest.start(TRAIN_SKILL, out, [config_path, options['warm_start']], [options['seed']])

        result = train_skill_job.delay(data, str(out / skill_id), options['seed'], options['warm_start'])
        summary = result.get()
        manifest.add_output(summary['path'])
        manifest.write()

        self.stdout.write(f"Trained {summary['skill_id']}: {summary['episodes']} episodes -> {summary['path']}")
        for name, value in summary.get('metrics', {}).items():
            self.stdout.write(f"  {name}: {value}")

    def handle_build_graph(self, options):
        config = {}
        if options['config']:
            config = validate_config(GraphConfigSerializer, load_json(options['config']))
        registry = open_registry(options['registry'], create=False)
        entries = registry_entries(registry)
        if not entries:
            raise CommandError(f"Registry {registry.root} holds no skills", returncode=EXIT_USAGE)

        out = Path(options['out'])
        inputs = [options['config']] + [entry.path for entry in entries]
        manifest = RunManifest.start(BUILD_GRAPH, out, inputs, [options['seed']])
        bundle = build_graph(entries, seed=options['seed'], **build_options(config))
        bundle.meta.update({key: config[key] for key in ('alpha_high', 'alpha_low') if key in config})
        save_graph(out, bundle)
        manifest.add_output(out)
        manifest.write()

        quality = bundle.meta['quality']
        self.stdout.write(f"Built graph over {len(entries)} skills in {len(bundle.losses)} iterations "
                          f"(final loss {_fmt(bundle.losses[-1] if bundle.losses else None)})")
        self.stdout.write(f"  positives > 0.95: {_fmt(quality['positive_above'])}  "
                          f"negatives < 0.10: {_fmt(quality['negative_below'])}  "
                          f"softs within target: {_fmt(quality['soft_within'])}")

    def handle_query(self, options):
        env, task = parse_env(options['env']), parse_task(options['task'])
        bundle = load_graph(options['bundle'])
        table = query(bundle.model, env, task)
        decision = dispatch(table.restricted(bundle.kind_skill_ids(task.kind)), bundle.meta.get('alpha_high'),
                            bundle.meta.get('alpha_low'), bundle.meta.get('blend_cap'))

        self.stdout.write(f"{'skill':<24}{'S_env':>10}{'S_task':>10}{'S':>10}")
        for row in table.rows[:options['top']]:
            self.stdout.write(f"{row.skill_id:<24}{row.s_env:>10.4f}{row.s_task:>10.4f}{row.score:>10.4f}")
        members = ', '.join(f"{skill_id} {weight:.4f}" for skill_id, weight in decision.members)
        self.stdout.write(f"decision: {decision.band} {members}")

        out = Path(options['out'])
        manifest = RunManifest.start(QUERY, out, [options['bundle']])
        manifest.add_output(table.write_csv(out / SCORES_FILE))
        (out / DECISION_FILE).write_text(json.dumps({
            'env': [float(v) for v in env.to_vector()],
            'task': [float(v) for v in task.to_vector()],
            'table_digest': table.digest(),
            'decision': decision.as_dict(),
        }, indent=2, sort_keys=True) + '\n')
        manifest.add_output(out / DECISION_FILE)
        manifest.write()

    def handle_run_scenario(self, options):
        if options['seeds'] < 1 or options['threads'] < 1:
            raise CommandError("--seeds and --threads must be at least 1", returncode=EXIT_USAGE)
        if not Path(options['spec']).is_file():
            raise ConfigError(f"Scenario file {options['spec']} does not exist")
        spec = load_scenario(options['spec'])
        overrides = {}
        if options['finetune_config']:
            overrides = validate_config(TrainConfigSerializer, load_json(options['finetune_config']))
        graph = load_graph(options['graph'])
        skills = RegistrySkills(open_registry(options['registry'], create=False))

        out = Path(options['out'])
        seeds = list(range(options['seed'], options['seed'] + options['seeds']))
        manifest = RunManifest.start(RUN_SCENARIO, out, [options['spec'], options['graph'],
                                                          options['finetune_config']], seeds)
        runs = run_scenarios(spec, skills, graph, seeds, threads=options['threads'],
                             allow_finetune=options['allow_finetune'], finetune_overrides=overrides,
                             trajectory_dir=out / TRAJECTORY_DIR)

        log = DecisionLog()
        summaries = []
        for run in runs:
            log.extend(run.decisions)
            summaries.extend(run.stages)
            for record in run.decisions:
                mark = 'ok' if record.success else f"expected {','.join(record.expected)}"
                skills_used = ', '.join(f"{s} {w:.2f}" for s, w in record.decision.members)
                self.stdout.write(f"seed {record.seed} stage {record.stage} ({record.stage_name}) tick {record.tick}: "
                                  f"{record.decision.band} {skills_used} [{mark}]")
            if run.truncated:
                self.stderr.write(f"seed {run.seed}: truncated at tick {run.final_tick}: {run.diagnostic}")
            for record in run.finetuned:
                manifest.add_output(record.save(out / FINETUNED_DIR / record.skill_id))
                self.stdout.write(f"seed {run.seed}: fine-tuned {record.skill_id} from {record.parent_id} "
                                  f"(register with `registry add --parent {record.parent_id}`)")

        manifest.add_output(log.write_jsonl(out / DECISION_LOG_FILE))
        manifest.add_output(write_stage_summaries(out / STAGE_SUMMARY_FILE, summaries))
        manifest.add_output(out / TRAJECTORY_DIR)
        manifest.write()

        rate = decision_success_rate(log)
        successes = sum(record.success for record in log)
        self.stdout.write(f"rho_succ = {rate:.2f} ({successes}/{len(log)} decisions over {len(runs)} runs)")

    def handle_eval(self, options):
        target = Path(options['target'])
        if (target / SKILL_META_FILE).is_file():
            rows = self._eval_skill(target, options)
        elif (target / GRAPH_META_FILE).is_file():
            rows = self._eval_graph(target, options)
        else:
            raise CommandError(f"{target} is neither a skill directory nor a graph bundle", returncode=EXIT_USAGE)

        for metric, value, verdict in rows:
            self.stdout.write(f"{verdict + ' ' if verdict else ''}{metric} {_fmt(value)}")
        if options['out']:
            out = Path(options['out'])
            manifest = RunManifest.start(EVAL, out, [target, options['world']], [options['seed']])
            path = out / METRICS_FILE
            out.mkdir(parents=True, exist_ok=True)
            lines = [','.join(METRIC_FIELDS)] + [f"{metric},{value!r},{verdict}" for metric, value, verdict in rows]
            path.write_text('\n'.join(lines) + '\n')
            manifest.add_output(path)
            manifest.write()

        failed = [metric for metric, _, verdict in rows if verdict == FAIL]
        if failed:
            raise CommandError(f"{len(failed)} check(s) failed: {', '.join(failed)}", returncode=EXIT_RUNTIME)

    def _eval_skill(self, target, options):
        names = parse_metrics(options['metrics'], list(SKILL_METRICS))
        record = SkillRecord.load(target)
        if options['world']:
            data = validate_config(WorldConfigSerializer, load_json(options['world']), root='world')
            world_config = world_config_from_data(data, seed=options['seed'])
        else:
            world_config = training_world_config(record.env, record.task, seed=options['seed'])
        metrics = evaluate_skill(record, world_config, options['episodes'], seed=options['seed']).as_dict()
        return [(name, float(metrics[SKILL_METRICS[name]]), '') for name in names]

    def _eval_graph(self, target, options):
        names = parse_metrics(options['metrics'], GRAPH_METRICS)
        bundle = load_graph(target)
        samples = build_samples(bundle.facts(), flocking_profile=bundle.meta.get('flocking_delta_profile'),
                                seed=bundle.meta.get('seed', 0))
        rows = []
        if GRADIENTS in names:
            errors = directional_gradient_check(bundle.model, samples[:GRADIENT_SAMPLE_LIMIT],
                                                directions=GRADIENT_DIRECTIONS, seed=options['seed'])
            for index, error in enumerate(errors):
                rows.append((f"gradients.{index}", error, PASS if error <= GRADIENT_TOLERANCE else FAIL))
        if QUALITY in names:
            quality = graph_quality(bundle.model, samples).as_dict()
            for key, floor in QUALITY_FLOORS.items():
                value = quality[key]
                ok = math.isnan(value) or value >= floor
                rows.append((f"quality.{key}", value, PASS if ok else FAIL))
        if NORMALS in names:
            drift = float(np.max(np.abs(np.linalg.norm(bundle.model.normals, axis=1) - 1.0)))
            rows.append(('normals.unit_drift', drift, PASS if drift <= NORMAL_TOLERANCE else FAIL))
        return rows

    def handle_registry(self, options):
        action = options['action']
        if action == REGISTRY_ADD:
            return self._registry_add(options)
        registry = open_registry(options['registry'], create=False)
        if action == REGISTRY_LIST:
            for skill in registry_list(registry):
                parent = skill.parent.skill_id if skill.parent else '-'
                flag = ' placeholder' if skill.placeholder else ''
                self.stdout.write(f"{skill.skill_id}\t{skill.task_kind}\t{skill.provenance}\tparent={parent}\t"
                                  f"env={skill.env}\ttask={skill.task}{flag}")
        elif action == REGISTRY_VERIFY:
            verified = registry_verify(registry)
            self.stdout.write(f"OK {len(verified)} skills")
        elif action == REGISTRY_GC:
            paths = registry_gc(registry, dry_run=not options['apply'])
            verb = 'removed' if options['apply'] else 'unreferenced'
            for path in paths:
                self.stdout.write(f"{verb} {path.relative_to(registry.root_path)}")
            self.stdout.write(f"{len(paths)} path(s) {verb}")

    def _registry_add(self, options):
        registry = open_registry(options['registry'])
        if options['reference_library']:
            taken = set(registry.skills.values_list('skill_id', flat=True))
            for fact in reference_facts():
                if fact.skill_id in taken:
                    self.stderr.write(f"{fact.skill_id} already registered, skipped")
                    continue
                registry_add(registry, placeholder_record(fact.skill_id, fact.env, fact.task), fact.skill_id)
                self.stdout.write(f"added {fact.skill_id} (placeholder)")
            return

        if options['placeholder']:
            if not (options['skill_id'] and options['env'] and options['task']):
                raise CommandError("--placeholder needs --skill-id, --env and --task", returncode=EXIT_USAGE)
            record = placeholder_record(options['skill_id'], parse_env(options['env']), parse_task(options['task']))
        elif options['source']:
            record = SkillRecord.load(options['source'])
        else:
            raise CommandError("Give a skill directory, --placeholder or --reference-library", returncode=EXIT_USAGE)
        skill = registry_add(registry, record, options['skill_id'], options['parent'])
        self.stdout.write(f"added {skill.skill_id} ({skill.provenance})")
