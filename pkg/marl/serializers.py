from rest_framework import serializers

from marl.constants.marl_constants import HYPERPARAMETERS
from marl.trainer import TrainConfig
from swarmsim.serializers import EnvFeatureSerializer, TaskFeatureField, WorldConfigSerializer


class TrainConfigSerializer(serializers.Serializer):
    """
    Overrides on top of the per-kind hyper-parameter table; every key is optional. The merged
    config must make a valid TrainConfig for every task kind.
    """
    episodes = serializers.IntegerField(min_value=0, required=False)
    episode_len = serializers.IntegerField(min_value=1, required=False)
    buffer_size = serializers.IntegerField(min_value=1, required=False)
    batch = serializers.IntegerField(min_value=1, required=False)
    hidden_size = serializers.IntegerField(min_value=1, required=False)
    hidden_layers = serializers.IntegerField(min_value=1, required=False)
    critic_lr = serializers.FloatField(min_value=1e-12, required=False)
    actor_lr = serializers.FloatField(min_value=1e-12, required=False)
    gamma = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    tau = serializers.FloatField(min_value=1e-12, max_value=1.0, required=False)
    noise_scale = serializers.FloatField(min_value=0.0, required=False)
    exploration_decay = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    team_size = serializers.IntegerField(min_value=1, required=False)
    train_every = serializers.IntegerField(min_value=1, required=False)

    def validate_gamma(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("Ensure this value is less than 1.0.")
        return value

    def validate(self, attrs):
        for kind, defaults in HYPERPARAMETERS.items():
            batch = attrs.get('batch', defaults['batch'])
            if attrs.get('buffer_size', defaults['buffer_size']) < batch:
                raise serializers.ValidationError({'buffer_size': [f"Ensure this value is at least batch ({batch})."]})
            try:
                TrainConfig.for_task(kind, **attrs)
            except ValueError as e:
                raise serializers.ValidationError(str(e))
        return attrs


class TrainSkillConfigSerializer(serializers.Serializer):
    skill_id = serializers.RegexField(r'^[A-Za-z0-9_.\-]+$', max_length=128)
    env = EnvFeatureSerializer()
    task = TaskFeatureField()
    train = TrainConfigSerializer(default=dict)
    world = WorldConfigSerializer(required=False)
    eval_episodes = serializers.IntegerField(min_value=0, default=0)

    def validate(self, attrs):
        world = attrs.get('world')
        if world is not None:
            kinds = {team['team']: team['task'].kind for team in world['teams']}
            if attrs['task'].kind not in kinds.values():
                raise serializers.ValidationError({'world': [f"No team runs a {attrs['task'].kind} task."]})
        return attrs


def train_config_from_data(task, data, seed=None):
    """TrainConfig for a validated TrainSkillConfigSerializer payload; `seed` overrides the default 0."""
    return TrainConfig.for_task(task.kind, seed=seed, **data.get('train', {}))
