import math
import tempfile
import json
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from sgswarm.exceptions import ConfigError
from sgswarm.validation import validate_config
from swarmsim.combat import CombatOutcome, KillEvent, attack_predicate, resolve_combat
from swarmsim.constants.swarmsim_constants import FIXED, GREEN, PERIODIC, RED
from swarmsim.controllers import leader_policy, pursuit_force, scripted_actions, scripted_pursuit
from swarmsim.dynamics import step
from swarmsim.exceptions import ActionError, DeadAgentError, FeatureError
from swarmsim.export import TrajectoryWriter, write_episode_metrics
from swarmsim.features import EnvFeature, TaskFeature
from swarmsim.perception import observe, perceive
from swarmsim.rewards import adversarial_reward, flocking_reward
from swarmsim.serializers import WorldConfigSerializer, world_config_from_data
from swarmsim.world import AgentState, LeaderPath, TeamConfig, World, WorldConfig

FLOCK = TaskFeature.flocking(1.0, 0.0, 0.5, 3.0)
FIGHT = TaskFeature.adversarial(1.0, 0.0, 1.0, 3, 0.3)


def make_world(y=FIXED, length=6.0, teams=((GREEN, FLOCK, 1),), seed=0, **constants):
    team_configs = []
    for index, (team, task, size) in enumerate(teams):
        team_configs.append(TeamConfig(team=team, task=task, size=size, center=(1.5 + 3 * index, 3.0), jitter=0.0))
    return World(WorldConfig(env=EnvFeature(y, length), teams=team_configs, seed=seed, **constants))


def place(world, agent_id, p, v=(0.0, 0.0)):
    agent = world.agent(agent_id)
    agent.p = np.array(p, dtype=np.float64)
    agent.v = np.array(v, dtype=np.float64)
    return agent


def still(world):
    return {agent.id: np.zeros(2) for agent in world.living()}


class FeatureTests(SimpleTestCase):

    def test_arity_selects_kind(self):
        self.assertTrue(TaskFeature.from_values([1, 0, 0.4, 3]).is_flocking)
        self.assertFalse(TaskFeature.from_values([1, 0, 1, 3, 0.3]).is_flocking)
        with self.assertRaises(FeatureError):
            TaskFeature.from_values([1, 0, 0.4])

    def test_vectors_keep_feature_order(self):
        np.testing.assert_array_equal(TaskFeature.from_values([1, 0, 1, 2, 0.4]).to_vector(), [1, 0, 1, 2, 0.4])
        np.testing.assert_array_equal(EnvFeature(1, 6.0).to_vector(), [1.0, 6.0])

    def test_invalid_values(self):
        with self.assertRaises(FeatureError):
            TaskFeature.flocking(0.5, 0.5, 0.4, 3)
        with self.assertRaises(FeatureError):
            TaskFeature.adversarial(1, 0, 1, 0, 0.3)
        with self.assertRaises(FeatureError):
            EnvFeature(2, 6.0)
        with self.assertRaises(FeatureError):
            EnvFeature(1, 0.0)


class StepTests(SimpleTestCase):

    def test_periodic_wrap_keeps_velocity(self):
        world = make_world(y=PERIODIC)
        place(world, 0, (6.0 - 0.01, 3.0), (1.0, 0.0))
        step(world, still(world))
        agent = world.agent(0)
        self.assertAlmostEqual(agent.p[0], 0.09, places=12)
        np.testing.assert_array_equal(agent.v, [1.0, 0.0])

    def test_fixed_wall_contains_and_reflects(self):
        world = make_world(y=FIXED)
        place(world, 0, (6.0 - 0.01, 3.0), (1.0, 0.0))
        step(world, {0: np.array([1.0, 0.0])})
        agent = world.agent(0)
        self.assertTrue(0.0 <= agent.p[0] <= 6.0)
        self.assertLess(agent.v[0], 0.0)

    def test_overlapping_robots_are_pushed_apart(self):
        world = make_world(teams=((GREEN, FLOCK, 2),))
        a = place(world, 0, (3.0, 3.0))
        b = place(world, 1, (3.15, 3.0))
        step(world, still(world))
        self.assertGreater(np.linalg.norm(b.p - a.p), 0.15)
        self.assertLess(a.v[0], 0.0)
        self.assertGreater(b.v[0], 0.0)

    def test_speed_is_clamped(self):
        world = make_world()
        place(world, 0, (3.0, 3.0), (0.95, 0.0))
        step(world, {0: np.array([1.0, 1.0])})
        self.assertLessEqual(np.linalg.norm(world.agent(0).v), 1.0 + 1e-12)

    def test_action_validation(self):
        world = make_world(teams=((GREEN, FLOCK, 2),))
        with self.assertRaises(ActionError):
            step(world, {0: np.zeros(2)})
        with self.assertRaises(ActionError):
            step(world, {0: np.zeros(2), 1: np.zeros(3)})
        with self.assertRaises(ActionError):
            step(world, {0: np.zeros(2), 1: np.zeros(2), 7: np.zeros(2)})


class PerceptionTests(SimpleTestCase):

    def test_nobody_in_range(self):
        world = make_world(teams=((GREEN, FLOCK, 2),))
        place(world, 0, (0.5, 0.5))
        place(world, 1, (5.5, 5.5))
        self.assertEqual(perceive(world, 0), ([], []))

    def test_flocking_keeps_six_nearest(self):
        world = make_world(teams=((GREEN, FLOCK, 11),))
        rng = np.random.default_rng(3)
        place(world, 0, (3.0, 3.0))
        for agent_id in range(1, 11):
            place(world, agent_id, 3.0 + rng.uniform(-1.5, 1.5, size=2))
        expected = sorted(range(1, 11), key=lambda i: (world.distance(world.agent(0), world.agent(i)), i))[:6]
        self.assertEqual(perceive(world, 0).teammates, expected)

    def test_adversarial_caps_each_side(self):
        world = make_world(teams=((GREEN, FIGHT, 1), (RED, FIGHT, 4)))
        place(world, 0, (3.0, 3.0))
        for agent_id, offset in zip(range(1, 5), (1.2, 0.4, 0.9, 0.6)):
            place(world, agent_id, (3.0 + offset, 3.0 - offset / 2))
        by_distance = sorted(range(1, 5), key=lambda i: (world.distance(world.agent(0), world.agent(i)), i))
        self.assertEqual(perceive(world, 0).enemies, by_distance[:3])

    def test_dead_agent_cannot_perceive(self):
        world = make_world()
        world.agent(0).alive = False
        with self.assertRaises(DeadAgentError):
            perceive(world, 0)
        with self.assertRaises(DeadAgentError):
            observe(world, 0)

    def test_lone_observation(self):
        world = make_world()
        place(world, 0, (2.0, 3.0), (0.5, 0.0))
        obs = observe(world, 0)
        self.assertEqual(obs.shape, (28,))
        np.testing.assert_array_equal(obs[:4], [2.0, 3.0, 0.5, 0.0])
        self.assertFalse(np.any(obs[4:]))

    def test_neighbour_slot_holds_relative_state(self):
        world = make_world(teams=((GREEN, FLOCK, 2),))
        place(world, 0, (2.0, 3.0), (0.5, 0.0))
        place(world, 1, (3.0, 3.0), (0.5, 0.0))
        np.testing.assert_allclose(observe(world, 0)[4:8], [1.0, 0.0, 0.0, 0.0])

    def test_relative_position_uses_minimum_image(self):
        world = make_world(y=PERIODIC, teams=((GREEN, FLOCK, 2),))
        place(world, 0, (0.1, 3.0))
        place(world, 1, (5.9, 3.0))
        np.testing.assert_allclose(observe(world, 0)[4:6], [-0.2, 0.0], atol=1e-12)

    def test_adversarial_enemy_slots_start_half_way(self):
        world = make_world(teams=((GREEN, FIGHT, 1), (RED, FIGHT, 1)))
        place(world, 0, (2.0, 3.0))
        place(world, 1, (2.5, 3.0))
        obs = observe(world, 0)
        self.assertFalse(np.any(obs[4:16]))
        np.testing.assert_allclose(obs[16:20], [0.5, 0.0, 0.0, 0.0])


class CombatTests(SimpleTestCase):
    env = EnvFeature(FIXED, 6.0)

    def _agent(self, p, v, team=GREEN, agent_id=0):
        return AgentState(agent_id, team, np.array(p, dtype=float), np.array(v, dtype=float))

    def test_pursuit_from_behind(self):
        attacker = self._agent((0, 0), (1, 0))
        target = self._agent((0.2, 0), (1, 0), RED, 1)
        self.assertTrue(attack_predicate(attacker, target, 0.3, self.env))

    def test_target_facing_attacker(self):
        attacker = self._agent((0, 0), (1, 0))
        target = self._agent((0.2, 0), (-1, 0), RED, 1)
        self.assertFalse(attack_predicate(attacker, target, 0.3, self.env))

    def test_attacker_heading_outside_sector(self):
        angle = math.radians(80)
        attacker = self._agent((0, 0), (math.cos(angle), math.sin(angle)))
        target = self._agent((0.2, 0), (1, 0), RED, 1)
        self.assertFalse(attack_predicate(attacker, target, 0.3, self.env))

    def test_zero_velocity_and_range(self):
        target = self._agent((0.2, 0), (1, 0), RED, 1)
        self.assertFalse(attack_predicate(self._agent((0, 0), (0, 0)), target, 0.3, self.env))
        self.assertFalse(attack_predicate(self._agent((0, 0), (1, 0)), target, 0.2, self.env))

    def _five_on_one(self):
        world = make_world(teams=((GREEN, FIGHT, 5), (RED, FIGHT, 1)))
        place(world, 5, (3.0, 3.0), (0.5, 0.0))
        for agent_id, p in enumerate([(2.8, 3.0), (2.85, 3.05), (2.85, 2.95), (2.9, 3.0), (2.75, 3.0)]):
            place(world, agent_id, p, (0.5, 0.0))
        return world

    def test_attackers_are_capped_to_nearest(self):
        world = self._five_on_one()
        outcome = resolve_combat(world)
        self.assertEqual(world.agent(5).hp, 77.0)
        self.assertEqual(set(outcome.attackers[5]), {1, 2, 3})
        for agent_id in range(5):
            self.assertEqual(world.agent(agent_id).hp, 80.0)
            self.assertIn(agent_id, outcome.in_attack_position)

    def test_regeneration_caps_at_hp_max(self):
        world = make_world(teams=((GREEN, FIGHT, 1), (RED, FIGHT, 1)))
        place(world, 0, (1.0, 1.0))
        place(world, 1, (5.0, 5.0))
        world.agent(0).hp = 79.9
        resolve_combat(world)
        self.assertEqual(world.agent(0).hp, 80.0)
        self.assertEqual(world.agent(1).hp, 80.0)

    def test_kill_credits_every_attacker(self):
        world = self._five_on_one()
        world.agent(5).hp = 2.5
        outcome = resolve_combat(world)
        victim = world.agent(5)
        self.assertFalse(victim.alive)
        self.assertEqual(victim.hp, 0.0)
        self.assertEqual(outcome.kills, [KillEvent(5, RED, outcome.attackers[5])])
        for attacker in outcome.attackers[5]:
            self.assertEqual(outcome.kills_by(attacker), 1)


class RewardTests(SimpleTestCase):
    env = EnvFeature(FIXED, 10.0)

    def _agent(self, agent_id, p, v):
        return AgentState(agent_id, GREEN, np.array(p, dtype=float), np.array(v, dtype=float))

    def test_adversarial_default_is_zero(self):
        self.assertEqual(adversarial_reward(self._agent(0, (0, 0), (1, 0)), CombatOutcome()), 0.0)

    def test_adversarial_kill_bonus(self):
        outcome = CombatOutcome(kills=[KillEvent(9, RED, (0, 3))])
        self.assertEqual(adversarial_reward(self._agent(0, (0, 0), (1, 0)), outcome, k_surv=5), 5.0)

    def test_adversarial_attack_position_while_eliminated(self):
        outcome = CombatOutcome(kills=[KillEvent(0, GREEN, (7,))], in_attack_position={0})
        self.assertEqual(adversarial_reward(self._agent(0, (0, 0), (1, 0)), outcome, 5, 1), -4.0)

    def test_flocking_at_reference_distance(self):
        agent = self._agent(0, (1, 1), (1, 0))
        neighbors = [self._agent(1, (1.5, 1), (1, 0)), self._agent(2, (1, 1.5), (1, 0))]
        self.assertEqual(flocking_reward(agent, neighbors, 0.5, self.env), 0.0)

    def test_flocking_attraction(self):
        agent = self._agent(0, (1, 1), (1, 0))
        neighbors = [self._agent(1, (1.6, 1), (1, 0))]
        self.assertAlmostEqual(flocking_reward(agent, neighbors, 0.5, self.env, k_attr=1), -0.1, places=12)

    def test_flocking_alignment(self):
        agent = self._agent(0, (1, 1), (1, 0))
        neighbors = [self._agent(1, (1.5, 1), (-1, 0)), self._agent(2, (0.5, 1), (-1, 0))]
        self.assertAlmostEqual(flocking_reward(agent, neighbors, 0.5, self.env, k_alig=2), -4.0, places=12)

    def test_no_neighbours(self):
        self.assertEqual(flocking_reward(self._agent(0, (1, 1), (1, 0)), [], 0.5, self.env), 0.0)

    def test_hexagonal_lattice_interior_reward_is_zero(self):
        d_ref = 0.5
        world = make_world(y=FIXED, length=10.0, teams=((GREEN, TaskFeature.flocking(1, 0, d_ref, 0.6), 49),))
        for agent_id in range(49):
            row, col = divmod(agent_id, 7)
            place(world, agent_id, (2.0 + d_ref * (col + 0.5 * (row % 2)), 2.0 + d_ref * math.sqrt(3) / 2 * row),
                  (0.3, 0.0))
        center = world.agent(3 * 7 + 3)
        neighbors = [world.agent(i) for i in perceive(world, center.id).teammates]
        self.assertEqual(len(neighbors), 6)
        self.assertAlmostEqual(flocking_reward(center, neighbors, d_ref, world.env), 0.0, places=9)


class ControllerTests(SimpleTestCase):

    def _duel(self):
        return make_world(length=10.0, teams=((GREEN, FIGHT, 1), (RED, FIGHT, 1)))

    def test_pursuit_force_toward_resting_enemy(self):
        world = self._duel()
        place(world, 0, (2.0, 2.0))
        place(world, 1, (3.0, 2.0))
        np.testing.assert_allclose(pursuit_force(world.agent(0), world), [1.0, 0.0])

    def test_pursuit_of_comoving_enemy(self):
        world = self._duel()
        place(world, 0, (2.0, 2.0), (0.3, 0.1))
        place(world, 1, (2.0, 2.0), (0.3, 0.1))
        np.testing.assert_allclose(scripted_pursuit(world.agent(0), world), [0.0, 0.0])

    def test_pursuit_is_clipped(self):
        world = self._duel()
        place(world, 0, (2.0, 2.0))
        place(world, 1, (2.0, 4.0), (0.0, 1.0))
        np.testing.assert_allclose(pursuit_force(world.agent(0), world), [0.0, 4.0])
        np.testing.assert_allclose(scripted_pursuit(world.agent(0), world), [0.0, 1.0])

    def test_pursuit_without_enemy(self):
        world = self._duel()
        world.agent(1).alive = False
        np.testing.assert_array_equal(scripted_pursuit(world.agent(0), world), [0.0, 0.0])

    def test_leader_on_path_needs_no_correction(self):
        path = LeaderPath(((1.0, 1.0), (3.0, 1.0)), speed=0.5)
        agent = AgentState(0, GREEN, np.array([2.0, 1.0]), np.array([0.5, 0.0]), is_leader=True)
        np.testing.assert_allclose(leader_policy(agent, 2.0, path), [0.0, 0.0], atol=1e-12)

    def test_leader_at_rest_pushes_toward_next_waypoint(self):
        path = LeaderPath(((1.0, 1.0), (3.0, 1.0)), speed=0.5)
        agent = AgentState(0, GREEN, np.array([1.0, 1.0]), np.zeros(2), is_leader=True)
        action = leader_policy(agent, 0.0, path)
        self.assertGreater(action[0], 0.0)
        self.assertEqual(action[1], 0.0)

    def test_leader_traverses_full_path(self):
        path = LeaderPath(((1.0, 1.0), (3.0, 1.0), (3.0, 3.0)), speed=0.5)
        config = WorldConfig(env=EnvFeature(FIXED, 6.0), teams=[
            TeamConfig(GREEN, FLOCK, 1, center=(1.0, 1.0), jitter=0.0, leader_count=1, leader_path=path),
        ])
        world = World(config)
        for _ in range(int(path.length / path.speed / config.dt) + 100):
            step(world, scripted_actions(world))
        self.assertLess(np.linalg.norm(world.agent(0).p - np.array([3.0, 3.0])), 0.1)


class InvariantTests(SimpleTestCase):

    def _run(self, world, steps, seed):
        rng = np.random.default_rng(seed)
        length = world.env.L
        for _ in range(steps):
            living = world.living()
            before = {a.id: (a.p.copy(), a.hp) for a in living}
            actions = {a.id: rng.uniform(-1.2, 1.2, size=2) for a in living}
            step(world, actions)
            for agent_id, (p_before, hp_before) in before.items():
                agent = world.agent(agent_id)
                task = world.task_of(agent)
                if world.env.periodic:
                    turns = (p_before + agent.v * world.config.dt - agent.p) / length
                    np.testing.assert_allclose(turns, np.round(turns), atol=1e-9)
                    self.assertTrue(np.all((agent.p >= 0) & (agent.p < length)))
                else:
                    self.assertTrue(np.all((agent.p >= 0) & (agent.p <= length)))
                self.assertTrue(0.0 <= agent.hp <= world.config.hp_max)
                self.assertEqual(agent.alive, agent.hp > 0)
                if agent.alive:
                    speed = np.linalg.norm(agent.v)
                    self.assertLessEqual(speed, task.v_max + 1e-12)
                    self.assertGreaterEqual(speed, task.v_min - 1e-12)
                if not task.is_flocking:
                    self.assertLessEqual(hp_before - agent.hp, task.n_o * task.delta_h + 1e-12)

    def test_fixed_adversarial_invariants(self):
        world = make_world(y=FIXED, length=4.0, teams=((GREEN, FIGHT, 4), (RED, FIGHT, 4)), seed=1, hp_max=20.0)
        self._run(world, 5000, seed=1)

    def test_periodic_flocking_invariants(self):
        task = TaskFeature.flocking(1.0, 0.2, 0.5, 2.0)
        world = make_world(y=PERIODIC, length=4.0, teams=((GREEN, task, 6),), seed=2)
        self._run(world, 5000, seed=2)

    def test_bitwise_determinism(self):
        snapshots = []
        for _ in range(2):
            world = make_world(y=PERIODIC, teams=((GREEN, FIGHT, 3), (RED, FIGHT, 3)), seed=5)
            rng = np.random.default_rng(9)
            for _ in range(500):
                step(world, {a.id: rng.uniform(-1, 1, size=2) for a in world.living()})
            snapshots.append(json.dumps(world.snapshot()))
        self.assertEqual(snapshots[0], snapshots[1])


class ConfigAndExportTests(SimpleTestCase):

    def test_world_config_round_trip(self):
        data = validate_config(WorldConfigSerializer, {
            'env': {'y': 0, 'L': 6},
            'teams': [{'team': 'green', 'task': [1, 0, 0.4, 3], 'size': 10, 'center': [1, 1],
                       'leader_path': {'waypoints': [[1, 1], [3, 3]]}}],
            'seed': 4,
        })
        config = world_config_from_data(data)
        self.assertTrue(config.env.periodic)
        team = config.team_config(GREEN)
        self.assertEqual(team.leader_count, 1)
        self.assertEqual(team.spacing, 0.4)
        self.assertEqual(config.seed, 4)
        self.assertEqual(len(World(config).living(GREEN)), 10)

    def test_schema_error_names_offending_key(self):
        with self.assertRaises(ConfigError) as ctx:
            validate_config(WorldConfigSerializer, {
                'env': {'y': 1, 'L': 6},
                'teams': [{'team': 'green', 'task': [1, 0, 0.4], 'size': 0, 'center': [1, 1]}],
            })
        message = str(ctx.exception)
        self.assertIn('teams.0.task', message)
        self.assertIn('teams.0.size', message)

    def test_trajectory_and_metrics_files(self):
        world = make_world(teams=((GREEN, FIGHT, 2), (RED, FIGHT, 2)))
        with tempfile.TemporaryDirectory() as tmp:
            trajectory = Path(tmp) / 'run.jsonl'
            with TrajectoryWriter(trajectory) as writer:
                for _ in range(3):
                    writer.write(world, step(world, scripted_actions(world)))
            records = [json.loads(line) for line in trajectory.read_text().splitlines()]
            self.assertEqual([r['tick'] for r in records], [1, 2, 3])
            self.assertEqual(set(records[0]['agents'][0]), {'id', 'team', 'p', 'v', 'hp', 'alive'})

            metrics = write_episode_metrics(Path(tmp) / 'episodes.csv', [
                {'episode': 0, 'team': 'green', 'reward_sum': 1.5, 'kills': 0, 'mean_neighbor_distance': 0.4},
            ])
            self.assertEqual(metrics.read_text().splitlines()[0],
                             'episode,team,reward_sum,kills,mean_neighbor_distance')


class AttackMatrixTests(SimpleTestCase):

    def test_matrix_agrees_with_scalar_predicate(self):
        from swarmsim.combat import attack_matrix
        rng = np.random.default_rng(12)
        for y in (FIXED, PERIODIC):
            world = make_world(y=y, length=2.0, teams=((GREEN, FIGHT, 6), (RED, FIGHT, 6)))
            for agent in world.agents:
                place(world, agent.id, rng.uniform(0, 2.0, size=2), rng.uniform(-1, 1, size=2))
            living = world.living()
            matrix, _ = attack_matrix(world, living)
            for i, attacker in enumerate(living):
                for j, target in enumerate(living):
                    expected = attacker.team != target.team and attack_predicate(attacker, target, 0.3, world.env)
                    self.assertEqual(bool(matrix[i, j]), expected)
