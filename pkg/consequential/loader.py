"""
Config-file loading.

Run and lending configs are flat JSON objects. Every problem found is
reported at once, each with the line of the offending key when it can be
located; unknown keys come with a spelling suggestion.
"""

import difflib
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Type, Union

from pydantic import BaseModel, ValidationError

from .errors import ConfigError
from .schemas import EnvironmentName, LendingSweepConfig, RunConfig
from .services.presets import preset_defaults

logger = logging.getLogger(__name__)

PATH_KEYS = ("dataset_path", "score_table_path", "output")

PathLike = Union[str, Path]


def _read_object(path: Path) -> Tuple[Dict[str, Any], str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: the top level must be a JSON object")
    return raw, text


def _line_of(text: str, key: str) -> Optional[int]:
    """1-based line of the first occurrence of ``"key":``."""
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return number
    return None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"line {line}: " if line is not None else ""


def allowed_keys(model: Type[BaseModel]) -> Set[str]:
    keys = set()
    for name, info in model.model_fields.items():
        keys.add(name)
        if info.alias:
            keys.add(info.alias)
    return keys


def unknown_key_problems(raw: Dict[str, Any], model: Type[BaseModel], text: str) -> List[str]:
    allowed = allowed_keys(model)
    problems = []
    for key in raw:
        if key in allowed:
            continue
        message = f"{_where(text, key)}unknown key '{key}'"
        close = difflib.get_close_matches(key, sorted(allowed), n=1)
        if close:
            message += f" (did you mean '{close[0]}'?)"
        problems.append(message)
    return problems


def validation_problems(error: ValidationError, text: str) -> List[str]:
    problems = []
    for err in error.errors():
        loc = [str(part) for part in err["loc"]]
        key = loc[0] if loc else ""
        label = ".".join(loc) if loc else "config"
        problems.append(f"{_where(text, key) if key else ''}{label}: {err['msg']}")
    return problems


def _resolve_paths(raw: Dict[str, Any], base: Path) -> None:
    for key in PATH_KEYS:
        value = raw.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            raw[key] = str((base / value).resolve())


def _build(model: Type[BaseModel], merged: Dict[str, Any], raw: Dict[str, Any], text: str, path: Path):
    problems = unknown_key_problems(raw, model, text)
    known = {k: v for k, v in merged.items() if k in allowed_keys(model)}
    try:
        config = model.model_validate(known)
    except ValidationError as e:
        problems.extend(validation_problems(e, text))
        config = None
    if problems:
        raise ConfigError(f"invalid configuration in {path}", problems)
    return config


def load_run_config(path: PathLike) -> RunConfig:
    """
    Read a run config. Preset defaults for the named environment fill in
    keys the file leaves out; relative paths resolve against the file's
    directory.
    """
    path = Path(path)
    raw, text = _read_object(path)
    environment = raw.get("environment", EnvironmentName.SETTING1.value)
    try:
        environment = EnvironmentName(environment)
    except (ValueError, TypeError):
        names = [e.value for e in EnvironmentName]
        close = difflib.get_close_matches(str(environment), names, n=1)
        hint = f" (did you mean '{close[0]}'?)" if close else ""
        raise ConfigError(
            f"invalid configuration in {path}",
            [f"{_where(text, 'environment')}environment: unknown environment '{environment}'{hint}"],
        ) from None

    merged = preset_defaults(environment)
    merged.update(raw)
    _resolve_paths(merged, path.parent)
    config = _build(RunConfig, merged, raw, text, path)
    logger.debug(f"Loaded run config {path} (environment {environment.value})")
    return config


def load_lending_config(path: PathLike) -> LendingSweepConfig:
    path = Path(path)
    raw, text = _read_object(path)
    merged = dict(raw)
    _resolve_paths(merged, path.parent)
    return _build(LendingSweepConfig, merged, raw, text, path)


def dump_config(config: BaseModel) -> str:
    return json.dumps(config.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)


def validate_config(path: PathLike) -> Tuple[RunConfig, str]:
    """The resolved config and its JSON echo with every default filled in."""
    config = load_run_config(path)
    return config, dump_config(config)
