"""
Command-line value parsing. Feature strings are comma-separated raw values in
feature order; the task kind follows from the arity (4 flocking, 5 adversarial).
"""
import json
from pathlib import Path

from django.core.management.base import CommandError, CommandParser

from cli.constants.cli_constants import EXIT_USAGE
from cli.exceptions import FeatureStringError, UnknownMetric
from sgswarm.exceptions import ConfigError
from swarmsim.exceptions import FeatureError
from swarmsim.features import EnvFeature, TaskFeature


def parse_numbers(text, what):
    parts = [part.strip() for part in str(text).split(',')]
    try:
        return [float(part) for part in parts]
    except ValueError:
        raise FeatureStringError(f"{what} {text!r} must be comma-separated numbers") from None


def parse_env(text):
    values = parse_numbers(text, '--env')
    if len(values) != 2:
        raise FeatureStringError(f"--env needs 2 values (y,L), got {len(values)} in {text!r}")
    try:
        return EnvFeature.from_values(values)
    except FeatureError as e:
        raise FeatureStringError(f"--env {text!r}: {e}") from None


def parse_task(text):
    values = parse_numbers(text, '--task')
    try:
        return TaskFeature.from_values(values)
    except FeatureError as e:
        raise FeatureStringError(f"--task {text!r}: {e}") from None


def parse_metrics(text, known):
    """Metric names from a comma list; all of `known` when empty."""
    if not text:
        return list(known)
    names = [name.strip() for name in text.split(',') if name.strip()]
    unknown = [name for name in names if name not in known]
    if unknown:
        raise UnknownMetric(f"Unknown metric(s) {', '.join(unknown)}; choose from {', '.join(known)}")
    return list(dict.fromkeys(names))


def load_json(path, what='Config file'):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} {path} does not exist")
    try:
        return json.loads(path.read_text())
    except ValueError as e:
        raise ConfigError(f"{what} {path} is not valid JSON: {e}") from None


class UsageParser(CommandParser):
    """Subcommand parser whose argument errors carry the usage exit code under call_command too."""

    def error(self, message):
        if self.called_from_command_line:
            super().error(message)
        raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


def add_subcommand(commands, parent, name, **kwargs):
    parser = commands.add_parser(name, **kwargs)
    parser.called_from_command_line = parent.called_from_command_line
    return parser
