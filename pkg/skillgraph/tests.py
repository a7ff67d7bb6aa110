import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings, tag

from marl.records import CurveRow, placeholder_record
from marl.trainer import TrainConfig, train_skill
from numcore.constants.numcore_constants import ZEROS
from numcore.initializers import init_weights
from numcore.network import forward
from skillgraph.bundle import SkillIndexEntry, build_graph, load_graph, save_graph
from skillgraph.constants.skillgraph_constants import (
    BLEND, ENV_TO_SKILL, FINETUNE, FLOCKING_POSITIONAL, NEGATIVE, POSITIVE, REUSE, SOFT, TASK_TO_SKILL,
)
from skillgraph.dispatch import (
    DispatchDecision, ScoreRow, ScoreTable, blended_act, dispatch, episodes_to_reach, finetune, query,
)
from skillgraph.exceptions import CorruptGraphBundle, EmptyScoreTable, GraphTrainingDiverged, MixedSkillKinds
from skillgraph.features import EntityFeature, delta_weights, similarity_delta
from skillgraph.model import encode, init_graph_model
from skillgraph.samples import SkillFact, Triple, build_samples, reference_facts
from skillgraph.scoring import score_batch, transh_score
from skillgraph.training import graph_loss_and_gradients, graph_quality, gradient_check, train_graph
from swarmsim.constants.swarmsim_constants import FIXED, FLOCKING, PERIODIC
from swarmsim.features import EnvFeature, TaskFeature

FIXED_ENV = EnvFeature(FIXED, 6.0)
PERIODIC_ENV = EnvFeature(PERIODIC, 6.0)
FLOC_3 = TaskFeature.flocking(1.0, 0.0, 0.4, 3.0)
FLOC_4 = TaskFeature.flocking(1.0, 0.0, 0.8, 3.0)
ADVE_2 = TaskFeature.adversarial(1.0, 0.0, 1.0, 3, 0.3)

TINY = dict(dim=8, hidden_size=16, hidden_layers=2, iterations=60, batch=32)


def unit(vector):
    vector = np.asarray(vector, dtype=np.float64)
    return vector / np.linalg.norm(vector)


def table(*scores):
    return ScoreTable.from_rows(ScoreRow(f"skill_{i}", 1.0, s, s) for i, s in enumerate(scores))


def toy_facts():
    return [SkillFact('floc_3_fixed', FIXED_ENV, FLOC_3), SkillFact('adve_2_periodic', PERIODIC_ENV, ADVE_2)]


def entries(facts):
    return [SkillIndexEntry(f.skill_id, f.env, f.task) for f in facts]


def constant_action_record(skill_id, action, task=FLOC_3):
    """Zero-weight actor whose output bias makes it emit `action` everywhere."""
    record = placeholder_record(skill_id, FIXED_ENV, task)
    record.actor.biases[-1][:] = np.arctanh(action)
    return record


class TranshScoreTests(SimpleTestCase):

    def test_exact_fact_scores_one(self):
        h = np.random.default_rng(0).normal(size=96)
        self.assertEqual(transh_score(h, unit(np.ones(96)), np.zeros(96), h, 3.0), 1.0)

    def test_translation_matching_tail_scores_one(self):
        w = np.zeros(96)
        w[0] = 1.0
        b = np.zeros(96)
        b[1] = 1.0
        self.assertEqual(transh_score(np.zeros(96), w, b, b, 3.0), 1.0)

    def test_unit_residual_scores_exp_minus_lambda(self):
        w, d = np.zeros(96), np.zeros(96)
        w[0], d[1] = 1.0, 1.0
        self.assertAlmostEqual(transh_score(np.zeros(96), w, d, np.zeros(96), 3.0), math.exp(-3.0), places=15)
        self.assertAlmostEqual(math.exp(-3.0), 0.0498, places=4)

    def test_matches_direct_formula_and_ignores_normal_component(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            dim = int(rng.integers(2, 12))
            h, d, b = rng.normal(size=(3, dim))
            w = unit(rng.normal(size=dim))
            lam = float(rng.uniform(0.1, 5.0))

            direct = math.exp(-lam * np.linalg.norm((h - np.dot(w, h) * w) + d - (b - np.dot(w, b) * w)))
            score = transh_score(h, w, d, b, lam)
            self.assertAlmostEqual(score, direct, delta=1e-12)
            self.assertGreater(score, 0.0)
            self.assertLessEqual(score, 1.0)

            c = float(rng.normal() * 10)
            self.assertAlmostEqual(transh_score(h + c * w, w, d, b, lam), score, delta=1e-9)

    def test_non_unit_normal_is_normalized_with_warning(self):
        rng = np.random.default_rng(1)
        h, d, b, w = rng.normal(size=(4, 6))
        with self.assertLogs('skillgraph.scoring', 'WARNING'):
            score = transh_score(h, 5.0 * w, d, b, 3.0)
        self.assertAlmostEqual(score, transh_score(h, unit(w), d, b, 3.0), delta=1e-12)

    def test_batch_scores_match_single_scores(self):
        rng = np.random.default_rng(3)
        h, d, b = rng.normal(size=(3, 10, 5))
        w = np.array([unit(row) for row in rng.normal(size=(10, 5))])
        batch = score_batch(h, w, d, b, 2.0).score
        for i in range(10):
            self.assertAlmostEqual(batch[i], transh_score(h[i], w[i], d[i], b[i], 2.0), delta=1e-12)


class FeatureTests(SimpleTestCase):

    def test_flocking_task_is_padded_with_zero(self):
        entity = EntityFeature.from_task(FLOC_3)
        self.assertEqual(entity.values, (1.0, 0.0, 0.4, 3.0, 0.0))
        self.assertEqual(entity.task_kind, FLOCKING)
        self.assertEqual(EntityFeature.from_task(ADVE_2).values, (1.0, 0.0, 1.0, 3.0, 0.3))

    def test_flocking_delta_weights_reference_spacing(self):
        first, second = EntityFeature.from_task(FLOC_3), EntityFeature.from_task(FLOC_4)
        self.assertAlmostEqual(similarity_delta(first, second, delta_weights(first)), 0.3)

    def test_positional_profile_ignores_spacing(self):
        first, second = EntityFeature.from_task(FLOC_3), EntityFeature.from_task(FLOC_4)
        weights = delta_weights(first, flocking_profile=FLOCKING_POSITIONAL)
        self.assertEqual(similarity_delta(first, second, weights), 0.0)

    def test_environment_delta_between_boundary_kinds(self):
        fixed, periodic = EntityFeature.from_env(FIXED_ENV), EntityFeature.from_env(PERIODIC_ENV)
        self.assertAlmostEqual(similarity_delta(fixed, periodic, delta_weights(fixed)), 0.95)

    def test_delta_is_symmetric_and_clamped(self):
        first = EntityFeature.from_task(TaskFeature.flocking(1.0, 0.0, 0.4, 2.0))
        second = EntityFeature.from_task(TaskFeature.flocking(1.0, 0.0, 0.4, 9.0))
        weights = delta_weights(first)
        self.assertEqual(similarity_delta(first, second, weights), similarity_delta(second, first, weights))
        self.assertEqual(similarity_delta(first, second, weights), 1.0)


class GraphModelTests(SimpleTestCase):

    def test_initial_embeddings_and_normals_are_unit_vectors(self):
        model = init_graph_model([f"s{i}" for i in range(32)], 96, 16, 1, 3.0, seed=0)
        np.testing.assert_allclose(np.linalg.norm(model.skill_embeddings, axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(model.skill_embeddings @ model.skill_embeddings.T, np.eye(32), atol=1e-6)
        np.testing.assert_allclose(np.linalg.norm(model.normals, axis=1), 1.0, atol=1e-12)

    def test_same_seed_gives_identical_model(self):
        first = init_graph_model(['a', 'b'], 8, 16, 2, 3.0, seed=5)
        second = init_graph_model(['a', 'b'], 8, 16, 2, 3.0, seed=5)
        for x, y in zip(first.parameters(), second.parameters()):
            np.testing.assert_array_equal(x, y)

    def test_encode_matches_forward_pass(self):
        model = init_graph_model(['a'], 96, 256, 3, 3.0, seed=2)
        entity = EntityFeature.from_task(FLOC_3)
        expected = forward(model.task_spec, model.task_encoder, np.array([[1.0, 0.0, 0.4, 3.0, 0.0]]))[0]
        np.testing.assert_array_equal(encode(model, entity), expected)
        np.testing.assert_array_equal(encode(model, entity), encode(model, entity))

    def test_zero_encoder_gives_zero_vector(self):
        model = init_graph_model(['a'], 8, 16, 2, 3.0)
        model = replace(model, env_encoder=init_weights(model.env_spec, ZEROS))
        np.testing.assert_array_equal(encode(model, EntityFeature.from_env(FIXED_ENV)), np.zeros(8))

    def test_duplicate_skill_ids_are_rejected(self):
        with self.assertRaises(ValueError):
            init_graph_model(['a', 'a'], 8, 16, 2, 3.0)


class SampleTests(SimpleTestCase):

    def test_single_skill_builds_positives_and_relation_swaps(self):
        with self.assertLogs('skillgraph.samples', 'WARNING'):
            samples = build_samples([SkillFact('floc_3_fixed', FIXED_ENV, FLOC_3)])
        kinds = [s.kind for s in samples]
        self.assertEqual(kinds.count(POSITIVE), 2)
        self.assertEqual(kinds.count(NEGATIVE), 2)
        self.assertEqual(kinds.count(SOFT), 0)
        swaps = [s for s in samples if s.kind == NEGATIVE]
        self.assertEqual({(s.head.kind, s.relation) for s in swaps},
                         {('environment', TASK_TO_SKILL), ('task', ENV_TO_SKILL)})

    def test_reference_library_counts(self):
        facts = reference_facts()
        self.assertEqual(len(facts), 32)
        samples = build_samples(facts)
        kinds = [s.kind for s in samples]
        self.assertEqual(kinds.count(POSITIVE), 64)
        self.assertEqual(kinds.count(SOFT), 32 * (1 + 7))
        self.assertEqual(kinds.count(NEGATIVE), 32 * (2 + 4))

    def test_soft_samples_carry_similarity(self):
        facts = [SkillFact('floc_3_fixed', FIXED_ENV, FLOC_3), SkillFact('floc_4_fixed', FIXED_ENV, FLOC_4)]
        softs = [s for s in build_samples(facts) if s.kind == SOFT]
        self.assertEqual(len(softs), 2)
        for sample in softs:
            self.assertAlmostEqual(sample.delta, 0.3)
            self.assertAlmostEqual(sample.target, 0.7)

    def test_softs_never_pair_different_task_kinds(self):
        for sample in build_samples(toy_facts()):
            if sample.kind == SOFT:
                self.assertEqual(sample.head.kind, 'environment')

    def test_construction_is_deterministic(self):
        self.assertEqual(build_samples(reference_facts(), seed=4), build_samples(reference_facts(), seed=4))


class GraphTrainingTests(SimpleTestCase):

    def test_perfect_scores_give_zero_loss(self):
        model = init_graph_model(['near', 'far'], 4, 3, 1, 3.0)
        far = np.zeros(4)
        far[1] = 1e4
        model = replace(
            model,
            env_encoder=init_weights(model.env_spec, ZEROS),
            skill_embeddings=np.array([np.zeros(4), far]),
            normals=np.eye(4)[[0, 2]].copy(),
            translations=np.zeros((2, 4)),
        )
        env = EntityFeature.from_env(FIXED_ENV)
        samples = [
            Triple(env, ENV_TO_SKILL, 0, POSITIVE),
            Triple(env, ENV_TO_SKILL, 1, NEGATIVE),
            Triple(env, ENV_TO_SKILL, 1, SOFT, 0.3),
        ]
        loss = graph_loss_and_gradients(model, samples)
        self.assertEqual(loss.value, 0.0)
        for gradient in loss.gradients:
            self.assertFalse(np.any(gradient))

    def test_gradients_match_finite_differences(self):
        model = init_graph_model([f.skill_id for f in toy_facts()], 6, 5, 1, 1.0, seed=3)
        samples = build_samples(toy_facts())
        self.assertLess(gradient_check(model, samples), 1e-4)

    def test_normals_stay_unit_and_loss_drops(self):
        facts = reference_facts()[:4] + reference_facts()[8:12]
        model = init_graph_model([f.skill_id for f in facts], 8, 16, 2, 3.0, seed=1)
        samples = build_samples(facts)
        trained, losses = train_graph(model, samples, iterations=200, batch=32, seed=0, learning_rate=1e-2)
        np.testing.assert_allclose(np.linalg.norm(trained.normals, axis=1), 1.0, atol=1e-6)
        self.assertTrue(trained.trained)
        self.assertEqual(len(losses), 200)
        self.assertLess(np.mean(losses[-20:]), np.mean(losses[:20]))

    def test_training_is_reproducible(self):
        samples = build_samples(toy_facts())
        model = init_graph_model([f.skill_id for f in toy_facts()], 8, 16, 2, 3.0, seed=1)
        first, _ = train_graph(model, samples, iterations=20, batch=8, seed=2)
        second, _ = train_graph(model, samples, iterations=20, batch=8, seed=2)
        np.testing.assert_array_equal(first.normals, second.normals)
        np.testing.assert_array_equal(first.skill_embeddings, second.skill_embeddings)

    def test_non_finite_update_aborts(self):
        model = init_graph_model([f.skill_id for f in toy_facts()], 4, 3, 1, 3.0)
        broken = model.skill_embeddings.copy()
        broken[0, 0] = np.inf
        model = replace(model, skill_embeddings=broken)
        with self.assertRaises(GraphTrainingDiverged):
            train_graph(model, build_samples(toy_facts()), iterations=3, batch=64)

    def test_quality_fractions_cover_every_kind(self):
        samples = build_samples(toy_facts())
        model = init_graph_model([f.skill_id for f in toy_facts()], 8, 16, 2, 3.0)
        quality = graph_quality(model, samples)
        self.assertEqual(quality.positives, 4)
        self.assertGreater(quality.negatives, 0)
        self.assertEqual(quality.softs, 2)


class DispatchTests(SimpleTestCase):

    def test_high_top_score_reuses(self):
        decision = dispatch(table(0.97, 0.6, 0.2))
        self.assertEqual(decision, DispatchDecision(REUSE, (('skill_0', 1.0),)))

    def test_middle_band_blends_with_normalized_scores(self):
        decision = dispatch(table(0.90, 0.88, 0.3), 0.95, 0.85)
        self.assertEqual(decision.band, BLEND)
        self.assertEqual(decision.skill_ids, ('skill_0', 'skill_1'))
        self.assertAlmostEqual(decision.weights[0], 0.90 / 1.78, places=12)
        self.assertAlmostEqual(decision.weights[1], 0.88 / 1.78, places=12)
        self.assertAlmostEqual(sum(decision.weights), 1.0, delta=1e-12)

    def test_low_scores_fine_tune_the_top_skill(self):
        decision = dispatch(table(0.5, 0.85, 0.2))
        self.assertEqual(decision.band, FINETUNE)
        self.assertEqual(decision.top, 'skill_1')

    def test_band_edges(self):
        self.assertEqual(dispatch(table(0.95)).band, BLEND)
        self.assertEqual(dispatch(table(0.85)).band, FINETUNE)

    def test_blend_is_capped(self):
        decision = dispatch(table(0.94, 0.93, 0.92, 0.91, 0.90, 0.89), blend_cap=4)
        self.assertEqual(decision.skill_ids, ('skill_0', 'skill_1', 'skill_2', 'skill_3'))

    def test_empty_table_and_bad_thresholds_are_rejected(self):
        with self.assertRaises(EmptyScoreTable):
            dispatch(ScoreTable(()))
        with self.assertRaises(ValueError):
            dispatch(table(0.5), alpha_high=0.8, alpha_low=0.9)

    def test_table_is_sorted_with_id_tie_break(self):
        rows = ScoreTable.from_rows([ScoreRow('b', 1, 0.5, 0.5), ScoreRow('a', 1, 0.5, 0.5), ScoreRow('c', 1, .9, .9)])
        self.assertEqual([row.skill_id for row in rows], ['c', 'a', 'b'])

    def test_single_member_blend_is_that_skill(self):
        record = placeholder_record('floc_3_fixed', FIXED_ENV, FLOC_3)
        record.actor.biases[-1][:] = [0.3, -0.2]
        obs = np.random.default_rng(0).normal(size=28)
        action = blended_act(DispatchDecision(BLEND, (('floc_3_fixed', 1.0),)), [record], obs)
        np.testing.assert_allclose(action, np.tanh([0.3, -0.2]), atol=1e-15)

    def test_weighted_actions_are_combined(self):
        skills = {
            'a': constant_action_record('a', [0.2, -0.4]),
            'b': constant_action_record('b', [-0.6, 0.8]),
        }
        action = blended_act(DispatchDecision(BLEND, (('a', 0.7), ('b', 0.3))), skills, np.zeros(28))
        np.testing.assert_allclose(action, [-0.04, -0.04], atol=1e-12)

    def test_mixed_kinds_cannot_blend(self):
        skills = [placeholder_record('f', FIXED_ENV, FLOC_3), placeholder_record('a', FIXED_ENV, ADVE_2)]
        with self.assertRaises(MixedSkillKinds):
            blended_act(DispatchDecision(BLEND, (('f', 0.5), ('a', 0.5))), skills, np.zeros(28))

    def test_finetune_without_episodes_keeps_seed_weights(self):
        seed = train_skill(FIXED_ENV, FLOC_4, TrainConfig.for_task(
            FLOCKING, episodes=1, episode_len=5, batch=4, buffer_size=32, hidden_size=8, hidden_layers=1,
            team_size=3), skill_id='floc_4_fixed')
        config = TrainConfig.for_task(FLOCKING, episodes=0, batch=4, buffer_size=32, hidden_size=8, hidden_layers=1,
                                      team_size=3)
        task = TaskFeature.flocking(1.0, 0.0, 1.0, 3.0)
        result = finetune(DispatchDecision(FINETUNE, (('floc_4_fixed', 1.0),)), [seed], FIXED_ENV, task, config,
                          scratch_baseline=True)
        np.testing.assert_array_equal(result.record.actor.flat(), seed.actor.flat())
        self.assertEqual(result.record.parent_id, 'floc_4_fixed')
        self.assertIsNotNone(result.scratch)
        with self.assertRaises(ValueError):
            finetune(DispatchDecision(REUSE, (('floc_4_fixed', 1.0),)), [seed], FIXED_ENV, task, config)

    def test_episodes_to_reach_uses_trailing_mean(self):
        rows = [CurveRow(i, r, 0.0, 0.0) for i, r in enumerate((0.0, 1.0, 2.0, 3.0))]
        self.assertEqual(episodes_to_reach(rows, 2.5, window=2), 4)
        self.assertIsNone(episodes_to_reach(rows, 9.0))


class QueryAndBundleTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = build_graph(entries(toy_facts()), seed=0, **TINY)

    def test_query_scores_every_skill(self):
        scores = query(self.bundle.model, FIXED_ENV, FLOC_3)
        self.assertEqual(len(scores), 2)
        previous = 1.0
        for row in scores:
            self.assertGreater(row.score, 0.0)
            self.assertLessEqual(row.score, previous)
            self.assertAlmostEqual(row.score, row.s_env * row.s_task, delta=1e-15)
            previous = row.score

    def test_untrained_model_warns(self):
        model = replace(self.bundle.model, trained=False)
        with self.assertLogs('skillgraph.dispatch', 'WARNING'):
            query(model, FIXED_ENV, FLOC_3)

    def test_bundle_round_trip_preserves_queries(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_graph(Path(tmp) / 'graph', self.bundle)
            loaded = load_graph(Path(tmp) / 'graph')
        self.assertEqual(loaded.model.skill_ids, self.bundle.model.skill_ids)
        self.assertEqual(len(loaded.losses), TINY['iterations'])
        self.assertEqual(query(loaded.model, FIXED_ENV, ADVE_2).digest(),
                         query(self.bundle.model, FIXED_ENV, ADVE_2).digest())

    def test_rebuild_with_same_seed_is_identical(self):
        again = build_graph(entries(toy_facts()), seed=0, **TINY)
        np.testing.assert_array_equal(again.model.normals, self.bundle.model.normals)
        np.testing.assert_array_equal(again.model.translations, self.bundle.model.translations)

    def test_unknown_format_is_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_graph(Path(tmp) / 'graph', self.bundle)
            meta = json.loads((path / 'graph.meta').read_text())
            meta['format_version'] = 7
            (path / 'graph.meta').write_text(json.dumps(meta))
            with self.assertRaises(CorruptGraphBundle):
                load_graph(path)

    @override_settings(SGSWARM={**settings.SGSWARM, 'GRAPH_DIM': 4})
    def test_defaults_come_from_settings(self):
        bundle = build_graph(entries(toy_facts()[:1]), hidden_size=4, hidden_layers=1, iterations=2, batch=4)
        self.assertEqual(bundle.model.dim, 4)


@tag('slow')
class ReferenceGraphTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = build_graph(entries(reference_facts()), seed=0)
        cls.samples = build_samples(reference_facts(), seed=0)

    def test_sample_scores_meet_their_targets(self):
        quality = graph_quality(self.bundle.model, self.samples)
        self.assertGreaterEqual(quality.positive_above, 0.95)
        self.assertGreaterEqual(quality.negative_below, 0.95)
        self.assertGreaterEqual(quality.soft_within, 0.90)

    def test_first_stage_query_reuses_floc_3_fixed(self):
        scores = query(self.bundle.model, FIXED_ENV, FLOC_3)
        self.assertEqual(scores.top.skill_id, 'floc_3_fixed')
        self.assertGreater(scores.top.score, 0.95)
        self.assertEqual(dispatch(scores).band, REUSE)

    def test_second_stage_query_picks_adve_2_fixed(self):
        self.assertEqual(query(self.bundle.model, FIXED_ENV, ADVE_2).top.skill_id, 'adve_2_fixed')

    def test_third_stage_query_blends_neighbouring_spacings(self):
        decision = dispatch(query(self.bundle.model, FIXED_ENV, TaskFeature.flocking(1.0, 0.0, 0.6, 3.0)))
        self.assertEqual(decision.band, BLEND)
        self.assertEqual(set(decision.skill_ids[:2]), {'floc_3_fixed', 'floc_4_fixed'})

    def test_unfamiliar_tasks_fall_to_fine_tuning(self):
        for task in (TaskFeature.flocking(1.0, 0.0, 1.0, 3.0), TaskFeature.adversarial(1.0, 0.0, 1.0, 3, 0.8)):
            self.assertEqual(dispatch(query(self.bundle.model, FIXED_ENV, task)).band, FINETUNE)

    def test_fine_tuning_beats_scratch_budget(self):
        task = TaskFeature.flocking(1.0, 0.0, 1.0, 3.0)
        decision = dispatch(query(self.bundle.model, FIXED_ENV, task))
        fractions = []
        for seed in range(3):
            parent = train_skill(FIXED_ENV, FLOC_4, TrainConfig.for_task(FLOCKING, episodes=150, seed=seed),
                                 skill_id=decision.top)
            config = TrainConfig.for_task(FLOCKING, episodes=150, seed=seed)
            result = finetune(decision, [parent], FIXED_ENV, task, config, scratch_baseline=True)
            fraction = result.budget_fraction()
            fractions.append(1.0 if fraction is None else fraction)
        self.assertLessEqual(np.mean(fractions), 0.6)
