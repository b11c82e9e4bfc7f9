"""Run configuration for synthtrace.

A JSON file passed with --config mirrors the command-line flags.
All keys are validated against a whitelist built from the parser of
the selected subcommand; unknown keys are logged and ignored, and
flags given on the command line override file values.
"""

import argparse
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from synthtrace.constants import DEFAULT_LOG_LEVEL, DEFAULT_SEED, LOG_LEVELS
from synthtrace.errors import ValidationError
from synthtrace.workers import default_threads

log = logging.getLogger(__name__)

Converter = Callable[[Any], Any]


@dataclass(frozen=True)
class GlobalConfig:
    """Settings shared by every subcommand. Results never depend on threads."""

    seed: int = DEFAULT_SEED
    threads: int = field(default_factory=default_threads)
    log_level: str = DEFAULT_LOG_LEVEL
    log_file: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")
        if self.log_level not in LOG_LEVELS:
            raise ValidationError(
                f"log level must be one of {LOG_LEVELS}, got '{self.log_level}'"
            )


def _converter(action: argparse.Action) -> Converter:
    """Validate a JSON value the way argparse would validate the flag."""
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        def _flag(value: Any) -> bool:
            if not isinstance(value, bool):
                raise ValueError(f"expected true/false, got {value!r}")
            return value
        return _flag

    to_type = action.type or str

    def _one(value: Any) -> Any:
        if isinstance(value, (dict, list)) or value is None:
            raise ValueError(f"expected a single value, got {value!r}")
        if isinstance(value, bool) and to_type is not str:
            raise ValueError(f"expected a number, got {value!r}")
        converted = to_type(str(value)) if to_type is not str else str(value)
        if action.choices is not None and converted not in action.choices:
            raise ValueError(f"{converted!r} is not one of {list(action.choices)}")
        return converted

    if action.nargs in ("+", "*"):
        def _many(value: Any) -> list:
            if not isinstance(value, list):
                value = [value]
            return [_one(v) for v in value]
        return _many
    return _one


def whitelist_from_parsers(*parsers: argparse.ArgumentParser) -> dict[str, Converter]:
    """Map every option dest of the parsers to its validating converter."""
    allowed: dict[str, Converter] = {}
    for parser in parsers:
        for action in parser._actions:
            if action.option_strings and action.dest not in ("help", "config"):
                allowed[action.dest] = _converter(action)
    return allowed


def load_config(path: Path, allowed: Mapping[str, Converter]) -> dict:
    """Load flag values from a JSON config file.

    Keys may use dashes or underscores. Values are validated with the
    converters in allowed; keys outside the whitelist are ignored.

    Raises:
        ValidationError: file unreadable, not a JSON object, or a value
            that fails validation.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            saved = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise ValidationError(f"failed to load config {path}: {e}") from None
    if not isinstance(saved, dict):
        raise ValidationError(f"config {path} is not a JSON object")

    config = {}
    for key, value in saved.items():
        dest = str(key).lstrip("-").replace("-", "_")
        if dest not in allowed:
            log.warning("Ignoring unknown config key '%s' in %s.", key, path)
            continue
        try:
            config[dest] = allowed[dest](value)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as e:
            raise ValidationError(f"config {path}: invalid value for '{key}': {e}") from None
    log.debug("Loaded config keys %s from %s", sorted(config), path)
    return config
