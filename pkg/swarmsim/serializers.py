from rest_framework import serializers

from swarmsim.constants import swarmsim_constants as sc
from swarmsim.exceptions import FeatureError
from swarmsim.features import EnvFeature, TaskFeature
from swarmsim.world import LeaderPath, TeamConfig, WorldConfig, default_leader_count


class PointField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 2)
        kwargs.setdefault('max_length', 2)
        super().__init__(**kwargs)


class EnvFeatureSerializer(serializers.Serializer):
    y = serializers.ChoiceField(choices=sc.BOUNDARY_CHOICES)
    L = serializers.FloatField(min_value=0.0)

    def validate_L(self, value):
        if value <= 0:
            raise serializers.ValidationError('Ensure this value is greater than 0.')
        return value


class TaskFeatureField(serializers.ListField):
    """Task feature in raw order; arity picks the kind (4 flocking, 5 adversarial)."""
    child = serializers.FloatField()

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        try:
            return TaskFeature.from_values(values)
        except FeatureError as e:
            raise serializers.ValidationError(str(e))

    def to_representation(self, value):
        return [float(v) for v in value.to_vector()]


class LeaderPathSerializer(serializers.Serializer):
    waypoints = serializers.ListField(child=PointField(), min_length=1)
    speed = serializers.FloatField(min_value=0.0, default=sc.LEADER_SPEED)


class TeamSerializer(serializers.Serializer):
    team = serializers.ChoiceField(choices=sc.TEAM_CHOICES)
    task = TaskFeatureField()
    size = serializers.IntegerField(min_value=1)
    center = PointField()
    heading = PointField(default=[1.0, 0.0])
    speed = serializers.FloatField(min_value=0.0, default=0.0)
    spacing = serializers.FloatField(min_value=0.0, required=False)
    jitter = serializers.FloatField(min_value=0.0, default=sc.SPAWN_JITTER)
    leader_count = serializers.IntegerField(min_value=0, required=False)
    leader_path = LeaderPathSerializer(required=False)

    def validate(self, attrs):
        if attrs.get('leader_count', 0) > attrs['size']:
            raise serializers.ValidationError({'leader_count': 'Cannot exceed the team size.'})
        if attrs.get('leader_count') and 'leader_path' not in attrs:
            raise serializers.ValidationError({'leader_path': 'Leaders need a path.'})
        return attrs


class WorldConstantsSerializer(serializers.Serializer):
    robot_radius = serializers.FloatField(min_value=0.0, default=sc.ROBOT_RADIUS)
    mass = serializers.FloatField(min_value=1e-9, default=sc.ROBOT_MASS)
    hp_max = serializers.FloatField(min_value=1e-9, default=sc.HP_MAX)
    regen_factor = serializers.FloatField(min_value=0.0, default=sc.REGEN_FACTOR)
    k_i = serializers.FloatField(min_value=0.0, max_value=1.0, default=sc.K_I)
    k_ii = serializers.FloatField(min_value=0.0, max_value=1.0, default=sc.K_II)
    k_surv = serializers.FloatField(min_value=0.0, default=sc.K_SURV)
    k_situ = serializers.FloatField(min_value=0.0, default=sc.K_SITU)
    k_attr = serializers.FloatField(min_value=0.0, default=sc.K_ATTR)
    k_repl = serializers.FloatField(min_value=0.0, default=sc.K_REPL)
    k_alig = serializers.FloatField(min_value=0.0, default=sc.K_ALIG)
    n_h = serializers.IntegerField(min_value=2, default=sc.N_H)
    dt = serializers.FloatField(min_value=1e-9, default=sc.DT)
    f_max = serializers.FloatField(min_value=0.0, default=sc.F_MAX)
    k_spring = serializers.FloatField(min_value=0.0, default=sc.K_SPRING)

    def validate_n_h(self, value):
        if value % 2:
            raise serializers.ValidationError('n_h must be even.')
        return value


class WorldConfigSerializer(serializers.Serializer):
    env = EnvFeatureSerializer()
    teams = TeamSerializer(many=True, allow_empty=False)
    constants = WorldConstantsSerializer(default=dict)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate_teams(self, teams):
        names = [team['team'] for team in teams]
        if len(set(names)) != len(names):
            raise serializers.ValidationError('Each team may appear once.')
        return teams


def env_from_data(data):
    return EnvFeature(int(data['y']), float(data['L']))


def team_from_data(data):
    task = data['task']
    path = None
    if data.get('leader_path'):
        path = LeaderPath(tuple(tuple(point) for point in data['leader_path']['waypoints']),
                          data['leader_path']['speed'])
    leader_count = data.get('leader_count')
    if leader_count is None:
        leader_count = default_leader_count(data['size']) if (path is not None and task.is_flocking) else 0
    spacing = data.get('spacing')
    if spacing is None:
        spacing = task.d_ref if task.is_flocking else sc.SPAWN_SPACING
    return TeamConfig(
        team=data['team'], task=task, size=data['size'], center=tuple(data['center']),
        heading=tuple(data['heading']), speed=data['speed'], spacing=spacing, jitter=data['jitter'],
        leader_count=leader_count, leader_path=path,
    )


def world_config_from_data(data, seed=None):
    """Build a WorldConfig from validated WorldConfigSerializer data; `seed` overrides the file's."""
    constants = WorldConstantsSerializer(data=data.get('constants') or {})
    constants.is_valid(raise_exception=True)
    return WorldConfig(
        env=env_from_data(data['env']),
        teams=[team_from_data(team) for team in data['teams']],
        seed=data['seed'] if seed is None else seed,
        **constants.validated_data,
    )
