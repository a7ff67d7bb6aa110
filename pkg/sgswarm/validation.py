from rest_framework import serializers

from sgswarm.exceptions import ConfigError


def flatten_errors(errors, prefix=''):
    """
    Turn a DRF error tree into 'dotted.path: message' lines.
    """
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = key if not prefix else (prefix if key == 'non_field_errors' else f"{prefix}.{key}")
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        if errors and all(not isinstance(e, (dict, list)) for e in errors):
            lines.extend(f"{prefix or 'config'}: {e}" for e in errors)
        else:
            for index, value in enumerate(errors):
                if value:
                    lines.extend(flatten_errors(value, f"{prefix}.{index}" if prefix else str(index)))
    else:
        lines.append(f"{prefix or 'config'}: {errors}")
    return lines


def validate_config(serializer_class, data, root=''):
    """Validate `data` with a DRF serializer; raise ConfigError listing every dotted path that failed."""
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError('\n'.join(flatten_errors(serializer.errors, root)))
    return serializer.validated_data


class FloatListField(serializers.ListField):
    child = serializers.FloatField()
