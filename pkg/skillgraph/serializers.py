from rest_framework import serializers

from skillgraph.constants.skillgraph_constants import FLOCKING_PROFILE_CHOICES


class GraphConfigSerializer(serializers.Serializer):
    """Graph construction options; anything omitted falls back to settings.SGSWARM."""
    dim = serializers.IntegerField(min_value=1, required=False)
    hidden_size = serializers.IntegerField(min_value=1, required=False)
    hidden_layers = serializers.IntegerField(min_value=1, required=False)
    lam = serializers.FloatField(min_value=1e-12, required=False)
    iterations = serializers.IntegerField(min_value=1, required=False)
    batch = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(min_value=1e-12, required=False)
    flocking_profile = serializers.ChoiceField(choices=FLOCKING_PROFILE_CHOICES, required=False)
    alpha_high = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    alpha_low = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)

    def validate(self, attrs):
        high, low = attrs.get('alpha_high'), attrs.get('alpha_low')
        if high is not None and low is not None and not low < high:
            raise serializers.ValidationError({'alpha_low': ['Must be below alpha_high.']})
        return attrs


BUILD_OPTIONS = ('dim', 'hidden_size', 'hidden_layers', 'lam', 'iterations', 'batch', 'learning_rate',
                 'flocking_profile')


def build_options(data):
    """Keyword arguments for bundle.build_graph out of validated graph config data."""
    return {key: data[key] for key in BUILD_OPTIONS if key in data}
