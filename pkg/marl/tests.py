import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from scipy import stats

from marl.background.tasks import train_skill_job
from marl.exceptions import CorruptSkillRecord, TaskKindMismatch
from marl.policy import NoiseState, act, make_bundle, noise_sigma
from marl.records import SkillRecord, placeholder_record
from marl.replay import ReplayBuffer
from marl.serializers import TrainConfigSerializer, TrainSkillConfigSerializer
from marl.trainer import (
    TrainConfig, actor_objective_gradient, evaluate_skill, train_skill, train_step, training_world_config,
)
from numcore.exceptions import DimensionMismatch
from numcore.gradcheck import finite_difference_gradient, relative_error
from numcore.network import forward
from numcore.optim import soft_update
from sgswarm.exceptions import ConfigError
from sgswarm.validation import validate_config
from swarmsim.constants.swarmsim_constants import ADVERSARIAL, FIXED, FLOCKING, PERIODIC
from swarmsim.features import EnvFeature, TaskFeature

OBS_DIM = 28
ENV = EnvFeature(FIXED, 6.0)
FLOCK = TaskFeature.flocking(1.0, 0.0, 0.4, 3.0)
FIGHT = TaskFeature.adversarial(1.0, 0.0, 1.0, 3, 0.3)


def tiny_config(kind=FLOCKING, **overrides):
    values = dict(episodes=2, episode_len=6, buffer_size=256, batch=8, hidden_size=8, hidden_layers=1,
                  team_size=4, seed=3)
    values.update(overrides)
    return TrainConfig.for_task(kind, **values)


def tiny_bundle(kind=FLOCKING, seed=0, obs_dim=OBS_DIM, zero=False):
    return make_bundle(kind, obs_dim, 8, 2, actor_lr=1e-3, critic_lr=1e-3, seed=seed, zero=zero)


def fill(buffer, count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        buffer.push(rng.normal(size=buffer.obs_dim), rng.uniform(-1, 1, size=2), rng.normal(),
                    rng.normal(size=buffer.obs_dim), bool(rng.random() < 0.1))


class ReplayBufferTests(SimpleTestCase):

    def test_size_is_capped_by_capacity(self):
        buffer = ReplayBuffer(capacity=5, obs_dim=3)
        fill(buffer, 12)
        self.assertEqual(len(buffer), 5)

    def test_oldest_transition_is_overwritten(self):
        buffer = ReplayBuffer(capacity=2, obs_dim=1)
        for reward in (1.0, 2.0, 3.0):
            buffer.push([reward], [0.0, 0.0], reward, [reward], False)
        self.assertEqual(sorted(buffer.sample(2).rewards), [2.0, 3.0])

    def test_storage_grows_past_initial_allocation(self):
        buffer = ReplayBuffer(capacity=10000, obs_dim=2)
        fill(buffer, 5000)
        self.assertEqual(len(buffer), 5000)
        self.assertEqual(len(set(buffer.sample(5000).rewards)), 5000)

    def test_minibatch_has_no_repeated_rows(self):
        buffer = ReplayBuffer(capacity=100, obs_dim=2, seed=4)
        fill(buffer, 100)
        for _ in range(20):
            rows = buffer.sample_indices(64)
            self.assertEqual(len(set(rows.tolist())), 64)

    def test_rejects_oversized_batch_and_bad_observation(self):
        buffer = ReplayBuffer(capacity=10, obs_dim=3)
        fill(buffer, 2)
        with self.assertRaises(ValueError):
            buffer.sample(3)
        with self.assertRaises(DimensionMismatch):
            buffer.push(np.zeros(2), np.zeros(2), 0.0, np.zeros(3), False)

    def test_sampling_is_uniform(self):
        buffer = ReplayBuffer(capacity=50, obs_dim=1, seed=11)
        fill(buffer, 50)
        counts = np.zeros(50)
        for _ in range(2000):
            np.add.at(counts, buffer.sample_indices(10), 1)
        _, p_value = stats.chisquare(counts)
        self.assertGreater(p_value, 0.01)


class ActTests(SimpleTestCase):

    def test_noise_free_action_is_deterministic(self):
        bundle = tiny_bundle(seed=5)
        obs = np.random.default_rng(0).normal(size=OBS_DIM)
        np.testing.assert_array_equal(act(bundle, obs), act(bundle, obs))

    def test_zero_actor_without_noise_holds_still(self):
        bundle = tiny_bundle(zero=True)
        np.testing.assert_array_equal(act(bundle, np.ones(OBS_DIM)), np.zeros(2))

    def test_exploration_noise_is_reproducible_from_seed(self):
        bundle = tiny_bundle(seed=2)
        obs = np.random.default_rng(1).normal(size=OBS_DIM)
        action = act(bundle, obs, explore=True, noise_state=NoiseState.seeded(0.8, 9))

        draw = np.random.default_rng(9).normal(0.0, 0.8, size=2)
        expected = np.clip(forward(bundle.actor_spec, bundle.actor, obs) + draw, -1.0, 1.0)
        np.testing.assert_array_equal(action, expected)

    def test_batch_actions_match_single_actions(self):
        bundle = tiny_bundle(seed=8)
        batch = np.random.default_rng(3).normal(size=(5, OBS_DIM))
        actions = act(bundle, batch)
        self.assertEqual(actions.shape, (5, 2))
        np.testing.assert_allclose(actions[2], act(bundle, batch[2]), atol=1e-14)

    def test_wrong_observation_length_is_rejected(self):
        with self.assertRaises(DimensionMismatch):
            act(tiny_bundle(), np.zeros(OBS_DIM - 1))

    def test_noise_decays_from_scale_to_floor(self):
        self.assertAlmostEqual(noise_sigma(0, 100, 0.8, 0.1), 0.8)
        self.assertAlmostEqual(noise_sigma(99, 100, 0.8, 0.1), 0.08)
        self.assertLess(noise_sigma(50, 100, 0.8, 0.1), noise_sigma(49, 100, 0.8, 0.1))


class TrainStepTests(SimpleTestCase):

    def test_small_buffer_skips_update(self):
        bundle = tiny_bundle()
        buffer = ReplayBuffer(100, OBS_DIM)
        fill(buffer, 3)
        updated, result = train_step(bundle, buffer, tiny_config(batch=8))
        self.assertTrue(result.skipped)
        self.assertIs(updated, bundle)

    def test_critic_fits_constant_reward_without_discount(self):
        bundle = make_bundle(FLOCKING, 4, 8, 1, actor_lr=1e-4, critic_lr=5e-3, seed=1)
        buffer = ReplayBuffer(1, 4, seed=0)
        obs, action = np.array([0.1, -0.2, 0.3, 0.0]), np.array([0.5, -0.5])
        buffer.push(obs, action, 1.0, obs, False)
        config = tiny_config(gamma=0.0, batch=1, buffer_size=1)

        for _ in range(2000):
            bundle, result = train_step(bundle, buffer, config)
        q = forward(bundle.critic_spec, bundle.critic, np.concatenate([obs, action]))[0]
        self.assertAlmostEqual(q, 1.0, delta=0.05)

    def test_full_soft_update_copies_online_weights(self):
        bundle = tiny_bundle(seed=4)
        buffer = ReplayBuffer(64, OBS_DIM, seed=1)
        fill(buffer, 64)
        updated, result = train_step(bundle, buffer, tiny_config(tau=1.0, batch=16))
        self.assertFalse(result.skipped)
        np.testing.assert_array_equal(updated.actor_target.flat(), updated.actor.flat())
        np.testing.assert_array_equal(updated.critic_target.flat(), updated.critic.flat())
        self.assertFalse(np.array_equal(updated.actor.flat(), bundle.actor.flat()))

    def test_targets_approach_frozen_online_weights(self):
        bundle = tiny_bundle(seed=6)
        target = tiny_bundle(seed=7).actor
        gaps = []
        for _ in range(10):
            target = soft_update(target, bundle.actor, 0.01)
            gaps.append(np.linalg.norm(target.flat() - bundle.actor.flat()))
        self.assertTrue(all(later < earlier for earlier, later in zip(gaps, gaps[1:])))

    def test_actor_gradient_matches_finite_differences(self):
        bundle = make_bundle(FLOCKING, 3, 5, 1, actor_lr=1e-3, critic_lr=1e-3, seed=12)
        obs = np.random.default_rng(2).normal(size=(4, 3))

        def objective(actor):
            actions = forward(bundle.actor_spec, actor, obs)
            return -np.mean(forward(bundle.critic_spec, bundle.critic, np.hstack([obs, actions])))

        _, analytic = actor_objective_gradient(bundle, obs)
        numeric = finite_difference_gradient(objective, bundle.actor.copy())
        self.assertLess(relative_error(analytic, numeric), 1e-3)

    def test_config_rejects_out_of_range_discount_and_tau(self):
        with self.assertRaises(ValueError):
            tiny_config(gamma=1.0)
        with self.assertRaises(ValueError):
            tiny_config(tau=0.0)


class TrainSkillTests(SimpleTestCase):

    def test_zero_episodes_returns_initial_weights(self):
        config = tiny_config(episodes=0)
        record = train_skill(ENV, FLOCK, config, skill_id='floc_3_fixed')
        initial = make_bundle(FLOCKING, OBS_DIM, 8, 1, config.actor_lr, config.critic_lr, seed=config.seed)
        np.testing.assert_array_equal(record.actor.flat(), initial.actor.flat())
        self.assertEqual(record.curve, [])
        self.assertIsNone(record.parent_id)

    def test_short_run_is_reproducible(self):
        first = train_skill(ENV, FIGHT, tiny_config(ADVERSARIAL, team_size=3))
        second = train_skill(ENV, FIGHT, tiny_config(ADVERSARIAL, team_size=3))
        self.assertEqual(len(first.curve), 2)
        self.assertEqual([row.mean_reward for row in first.curve], [row.mean_reward for row in second.curve])
        np.testing.assert_array_equal(first.actor.flat(), second.actor.flat())
        self.assertTrue(first.actor.is_finite())

    def test_updates_start_once_buffer_holds_a_batch(self):
        record = train_skill(ENV, FLOCK, tiny_config(episodes=2, episode_len=4, batch=8))
        # 3 learners x 4 steps fill 12 rows; the first episode cannot train before row 8
        self.assertFalse(math.isnan(record.curve[0].critic_loss))
        self.assertFalse(math.isnan(record.curve[1].critic_loss))

    def test_warm_start_with_no_episodes_keeps_parent_weights(self):
        parent = train_skill(ENV, FLOCK, tiny_config(), skill_id='floc_4_fixed')
        child = train_skill(ENV, FLOCK, tiny_config(episodes=0), skill_id='child', warm_start=parent)
        np.testing.assert_array_equal(child.actor.flat(), parent.actor.flat())
        np.testing.assert_array_equal(child.critic.flat(), parent.critic.flat())
        self.assertEqual(child.parent_id, 'floc_4_fixed')

    def test_warm_start_across_kinds_is_rejected(self):
        parent = placeholder_record('adve_1_fixed', ENV, FIGHT)
        with self.assertRaises(TaskKindMismatch):
            train_skill(ENV, FLOCK, tiny_config(episodes=0), warm_start=parent)

    def test_world_for_other_kind_is_rejected(self):
        world = training_world_config(ENV, FIGHT, team_size=3)
        with self.assertRaises(TaskKindMismatch):
            train_skill(ENV, FLOCK, tiny_config(), world_config=world)


class EvaluateSkillTests(SimpleTestCase):

    def test_same_seed_gives_identical_metrics(self):
        record = train_skill(ENV, FLOCK, tiny_config(episodes=0))
        world = training_world_config(ENV, FLOCK, team_size=4)
        first = evaluate_skill(record, world, n_episodes=2, seed=5, episode_len=20)
        second = evaluate_skill(record, world, n_episodes=2, seed=5, episode_len=20)
        self.assertEqual(first.as_dict().keys(), second.as_dict().keys())
        self.assertEqual(first.mean_reward, second.mean_reward)
        self.assertEqual(first.distance_error, second.distance_error)
        self.assertTrue(math.isnan(first.win_rate))

    def test_adversarial_metrics_report_win_rate(self):
        record = placeholder_record('adve_2_fixed', ENV, FIGHT)
        metrics = evaluate_skill(record, training_world_config(ENV, FIGHT, team_size=2), 1, episode_len=10)
        self.assertGreaterEqual(metrics.win_rate, 0.0)
        self.assertLessEqual(metrics.win_rate, 1.0)
        self.assertTrue(math.isnan(metrics.distance_error))

    def test_kind_mismatch_is_rejected(self):
        record = placeholder_record('floc_3_fixed', ENV, FLOCK)
        with self.assertRaises(TaskKindMismatch):
            evaluate_skill(record, training_world_config(ENV, FIGHT, team_size=2), 1)


class SkillRecordTests(SimpleTestCase):

    def test_saved_record_loads_back(self):
        record = train_skill(EnvFeature(PERIODIC, 6.0), FIGHT, tiny_config(ADVERSARIAL, team_size=2),
                             skill_id='adve_2_periodic')
        with tempfile.TemporaryDirectory() as tmp:
            loaded = SkillRecord.load(record.save(Path(tmp) / 'adve_2_periodic'))
        self.assertEqual(loaded.skill_id, 'adve_2_periodic')
        self.assertEqual(loaded.env, record.env)
        self.assertEqual(loaded.task, record.task)
        np.testing.assert_array_equal(loaded.actor.flat(), record.actor.flat())
        self.assertEqual(len(loaded.curve), 2)
        self.assertFalse(loaded.placeholder)

    def test_placeholder_flag_survives_save(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = placeholder_record('floc_1_fixed', ENV, FLOCK).save(Path(tmp) / 'floc_1_fixed')
            self.assertTrue(SkillRecord.load(path).placeholder)

    def test_unsupported_format_is_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = placeholder_record('floc_1_fixed', ENV, FLOCK).save(Path(tmp) / 'skill')
            meta = json.loads((path / 'skill.meta').read_text())
            meta['format_version'] = 99
            (path / 'skill.meta').write_text(json.dumps(meta))
            with self.assertRaises(CorruptSkillRecord):
                SkillRecord.load(path)


class TrainSkillJobTests(SimpleTestCase):

    def config(self, **train):
        return {
            'skill_id': 'floc_3_fixed',
            'env': {'y': 1, 'L': 6},
            'task': [1, 0, 0.4, 3],
            'train': dict(episodes=2, episode_len=5, batch=4, buffer_size=64, hidden_size=8, hidden_layers=1,
                          team_size=3, **train),
        }

    def test_config_errors_name_the_offending_key(self):
        config = self.config()
        config['train']['batch'] = 0
        with self.assertRaises(ConfigError) as caught:
            validate_config(TrainSkillConfigSerializer, config)
        self.assertIn('train.batch', str(caught.exception))

    def test_task_arity_is_checked(self):
        config = self.config()
        config['task'] = [1, 0, 0.4]
        with self.assertRaises(ConfigError) as caught:
            validate_config(TrainSkillConfigSerializer, config)
        self.assertIn('task', str(caught.exception))

    def test_overrides_must_form_a_train_config(self):
        with self.assertRaises(ConfigError) as caught:
            validate_config(TrainSkillConfigSerializer, self.config(gamma=1.0))
        self.assertIn('train.gamma', str(caught.exception))
        with self.assertRaises(ConfigError) as caught:
            validate_config(TrainConfigSerializer, {'batch': 64, 'buffer_size': 32})
        self.assertIn('buffer_size', str(caught.exception))
        with self.assertRaises(ConfigError) as caught:
            validate_config(TrainConfigSerializer, {'batch': 600000})
        self.assertIn('buffer_size', str(caught.exception))
        self.assertEqual(validate_config(TrainConfigSerializer, {'gamma': 0.9, 'batch': 4, 'buffer_size': 4}),
                         {'gamma': 0.9, 'batch': 4, 'buffer_size': 4})

    def test_job_writes_skill_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = train_skill_job.apply(args=(self.config(), str(Path(tmp) / 'skill')), kwargs={'seed': 1}).get()
            self.assertEqual(result['episodes'], 2)
            record = SkillRecord.load(result['path'])
        self.assertEqual(record.skill_id, 'floc_3_fixed')
        self.assertEqual(record.seed, 1)


@tag('slow')
class SkillLearningTests(SimpleTestCase):

    def test_flocking_reward_improves_and_spacing_holds(self):
        config = TrainConfig.for_task(FLOCKING, episodes=300, batch=256, buffer_size=100000, team_size=10, seed=0)
        record = train_skill(ENV, FLOCK, config)
        rewards = [row.mean_reward for row in record.curve]
        self.assertGreater(np.mean(rewards[-100:]), np.mean(rewards[:100]))

        metrics = evaluate_skill(record, training_world_config(ENV, FLOCK, 10), n_episodes=5, seed=0)
        self.assertLess(metrics.distance_error, 0.2)

    def test_trained_team_beats_scripted_pursuit(self):
        world = training_world_config(ENV, FIGHT, 10)
        config = TrainConfig.for_task(ADVERSARIAL, episodes=400, batch=256, buffer_size=100000, team_size=10)
        untrained = train_skill(ENV, FIGHT, TrainConfig.for_task(ADVERSARIAL, episodes=0, team_size=10))
        self.assertLess(evaluate_skill(untrained, world, 50, seed=0).win_rate, 0.1)

        trained = train_skill(ENV, FIGHT, config)
        self.assertGreater(evaluate_skill(trained, world, 50, seed=0).win_rate, 0.7)
