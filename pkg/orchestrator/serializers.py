import json
from pathlib import Path

from rest_framework import serializers

from orchestrator.constants.orchestrator_constants import (
    ENTRY_CHOICES, FIXED_SKILL, GRAPH_QUERY, POLICY_SOURCE_CHOICES, START,
)
from orchestrator.scenario import PolicySource, ScenarioSpec, StageSpec
from sgswarm.validation import validate_config
from swarmsim.serializers import TaskFeatureField, TeamSerializer, WorldConfigSerializer, world_config_from_data


class ScenarioTeamSerializer(TeamSerializer):
    """Team layout; the initial task comes from the first stage."""
    task = TaskFeatureField(required=False)


class ScenarioWorldSerializer(WorldConfigSerializer):
    teams = ScenarioTeamSerializer(many=True, allow_empty=False)


class StageTeamSerializer(serializers.Serializer):
    task = TaskFeatureField()
    policy = serializers.ChoiceField(choices=POLICY_SOURCE_CHOICES, default=GRAPH_QUERY)
    expected = serializers.ListField(child=serializers.CharField(max_length=128), default=list)
    skill_id = serializers.CharField(max_length=128, required=False)

    def validate(self, attrs):
        if attrs['policy'] == GRAPH_QUERY and not attrs['expected']:
            raise serializers.ValidationError({'expected': 'Graph-query teams must declare the expected skills.'})
        if attrs['policy'] == FIXED_SKILL and not attrs.get('skill_id'):
            raise serializers.ValidationError({'skill_id': 'Fixed-skill teams must name a skill.'})
        return attrs


class StageSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=64)
    entry = serializers.ChoiceField(choices=ENTRY_CHOICES)
    teams = serializers.DictField(child=StageTeamSerializer(), allow_empty=False)


class ScenarioSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=128)
    world = ScenarioWorldSerializer()
    stages = StageSerializer(many=True, allow_empty=False)
    step_budget = serializers.IntegerField(min_value=1, required=False)
    final_stage_steps = serializers.IntegerField(min_value=1, required=False)

    def validate_stages(self, stages):
        if stages[0]['entry'] != START:
            raise serializers.ValidationError(f"The first stage must enter at '{START}'.")
        if any(stage['entry'] == START for stage in stages[1:]):
            raise serializers.ValidationError(f"Only the first stage may enter at '{START}'.")
        return stages

    def validate(self, attrs):
        teams = {team['team'] for team in attrs['world']['teams']}
        for index, stage in enumerate(attrs['stages']):
            unknown = set(stage['teams']) - teams
            if unknown:
                raise serializers.ValidationError(
                    {'stages': {index: {'teams': [f"Not in the world: {', '.join(sorted(unknown))}."]}}}
                )
        missing = teams - set(attrs['stages'][0]['teams'])
        if missing:
            raise serializers.ValidationError(
                {'stages': {0: {'teams': [f"Missing a task for: {', '.join(sorted(missing))}."]}}}
            )
        return attrs


def _stage_from_data(data):
    tasks = {team: entry['task'] for team, entry in data['teams'].items()}
    policies = {
        team: PolicySource(entry['policy'], tuple(entry['expected']), entry.get('skill_id'))
        for team, entry in data['teams'].items()
    }
    return StageSpec(data['name'], data['entry'], tasks, policies)


def scenario_from_data(data, seed=None):
    """ScenarioSpec from validated ScenarioSerializer data."""
    first = data['stages'][0]['teams']
    world = dict(data['world'])
    world['teams'] = [{**team, 'task': first[team['team']]['task']} for team in world['teams']]
    return ScenarioSpec(
        name=data['name'],
        world=world_config_from_data(world, seed=seed),
        stages=[_stage_from_data(stage) for stage in data['stages']],
        step_budget=data.get('step_budget'),
        final_stage_steps=data.get('final_stage_steps'),
    )


def load_scenario(path):
    path = Path(path)
    data = validate_config(ScenarioSerializer, json.loads(path.read_text()))
    return scenario_from_data(data)
