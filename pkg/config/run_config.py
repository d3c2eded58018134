"""
Run config files.

A run config is UTF-8 text with `#` comments, `[section]` headers and
`key = value` lines. Values are typed by their syntax: `true`/`false` are
booleans, then integers, then reals, anything else is a string; a value
containing commas is a list of such values. The sections validate into
`schemas.config_schemas.RunConfig`, which rejects unknown keys.
"""

import configparser
import json
import re
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from schemas.config_schemas import RunConfig
from utils.exceptions import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

SECTIONS = ("net", "train", "analyze", "bench")

_INT = re.compile(r"^[+-]?\d+$")
_REAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_value(text: str) -> Any:
    """Type one config value by syntax."""
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if _INT.match(text):
        return int(text)
    if _REAL.match(text):
        return float(text)
    return text


def format_value(value: Any) -> str:
    """Inverse of parse_value for echoing configs."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _error_key(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"])


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    """
    Parse and validate run config text.

    Raises:
        ConfigError: On syntax errors, unknown sections or keys, missing
            required keys or invalid values; `key` names the offender.
    """
    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        default_section="__defaults__",
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse config {source}: {e}") from e

    document: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"Unknown config section [{section}] in {source}", key=section)
        document[section] = {key: parse_value(value) for key, value in parser.items(section)}

    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        key = _error_key(first)
        if first["type"] == "missing":
            message = f"Missing config key '{key}' in {source}"
        elif first["type"] == "extra_forbidden":
            message = f"Unknown config key '{key}' in {source}"
        else:
            message = f"Invalid value for config key '{key}' in {source}: {first['msg']}"
        raise ConfigError(message, key=key) from e


def load_run_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    images: Optional[int] = None,
) -> RunConfig:
    """
    Read a run config file and apply command-line overrides.

    Args:
        path: Config file.
        seed, threads, images: Overrides from --seed, --threads, --images.

    Returns:
        RunConfig: The effective config.

    Raises:
        ConfigError: If the file is unreadable or invalid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"✗ Cannot read config {path}: {e}")
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    config = parse_run_config(text, source=str(path)).with_overrides(seed=seed, threads=threads, images=images)
    logger.info(f"✓ Loaded config {path}")
    return config


def render_run_config(config: RunConfig) -> str:
    """Effective config in the file format; parse_run_config(render_run_config(c)) == c."""
    lines = []
    for section in SECTIONS:
        values = getattr(config, section).model_dump(exclude_none=True)
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list) and not value:
                continue
            lines.append(f"{key} = {format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def echo_run_config(config: RunConfig, out_dir: Union[str, Path], json_copy: bool = True) -> None:
    """Write the effective config into out_dir as config.ini and, unless json_copy is off, config.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(render_run_config(config), encoding="utf-8")
    if json_copy:
        (out_dir / "config.json").write_text(
            json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    logger.debug(f"Echoed effective config into {out_dir}")
