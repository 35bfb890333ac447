import json
import tomllib
from pathlib import Path

from pydantic import ValidationError

from app.errors import ConfigurationError


def load_config_file(path):
    """
    Read a TOML or JSON configuration file into a plain dictionary.

    Nested TOML tables (``[weights]``, ``[noise]``) map onto nested pydantic
    models, so every field of a config model can be set from a file. The format
    is chosen from the file suffix; anything that is not ``.json`` is parsed as
    TOML.

    Args:
        path (str | Path): Location of the configuration file.

    Returns:
        dict: Parsed key-value content.

    Raises:
        ConfigurationError: If the file does not exist or cannot be parsed.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            return json.loads(path.read_text())
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc


def apply_overrides(data, overrides):
    """
    Return a copy of ``data`` with dotted-key overrides applied.

    ``None`` values are skipped so unset command-line flags never clobber
    file values.

    Example:
        apply_overrides({"weights": {"delta": 0.5}}, {"weights.delta": 0.9, "seed": None})
        # {"weights": {"delta": 0.9}}
    """
    merged = json.loads(json.dumps(data))
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    return merged


def parse_model(model_cls, data):
    """Validate ``data`` into ``model_cls``, reporting failures as configuration errors."""
    try:
        return model_cls.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid {model_cls.__name__}: {exc}") from exc
