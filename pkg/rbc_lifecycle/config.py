"""Host-side configuration defaults.

The config file is line-oriented ``key=value`` text with ``#`` comments.
Default location is ``~/.rbc/config``, overridable with ``RBC_CONFIG``.
``RBC_STATE`` and ``RBC_PROVIDER_WORKDIR`` override the state store and
sandbox locations after the file is read.
"""

import logging
import os
import shlex
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import MalformedConfig
from .provider import INSTANCE_TYPES, PROVIDERS

logger = logging.getLogger(__name__)

SCRIPT_PLACEHOLDER = "{script}"
DEFAULT_CONFIG_PATH = Path("~/.rbc/config")
DEFAULT_STATE_PATH = Path("~/.rbc/state.json")
DEFAULT_PROVIDER_WORKDIR = Path("~/.rbc/sandbox")


class Config(BaseModel):
    """Host-side defaults for every lifecycle command."""
    default_snapshot_id: str = Field(default="snap-default", description="Snapshot used when neither -ebsvol nor -snap is given")
    default_instance_type: str = Field(default="m1.xlarge", description="Catalog name used when -type is not given")
    default_resource_name: str = Field(default="rbc_resource", description="Resource used when -rname is not given")
    remote_user: str = Field(default="root")
    remote_home: Optional[str] = Field(default=None, description="Remote home path; defaults to /home/<remote_user>")
    runtime_command: str = Field(default="Rscript {script}", description="Command template with one {script} placeholder")
    provider: str = Field(default="local")
    state_path: Path = Field(default=DEFAULT_STATE_PATH)
    provider_workdir: Path = Field(default=DEFAULT_PROVIDER_WORKDIR)

    @field_validator("runtime_command")
    @classmethod
    def _one_placeholder(cls, value: str) -> str:
        if value.count(SCRIPT_PLACEHOLDER) != 1:
            raise ValueError(f"runtime_command must contain exactly one {SCRIPT_PLACEHOLDER} placeholder")
        return value

    @field_validator("default_instance_type")
    @classmethod
    def _known_type(cls, value: str) -> str:
        if value not in INSTANCE_TYPES:
            raise ValueError(f"unknown instance type {value!r}; known: {', '.join(sorted(INSTANCE_TYPES))}")
        return value

    @field_validator("provider")
    @classmethod
    def _known_provider(cls, value: str) -> str:
        if value not in PROVIDERS:
            raise ValueError(f"unknown provider {value!r}; known: {', '.join(sorted(PROVIDERS))}")
        return value

    @field_validator("state_path", "provider_workdir")
    @classmethod
    def _expand(cls, value: Path) -> Path:
        return Path(value).expanduser()

    @model_validator(mode="after")
    def _derive_remote_home(self) -> "Config":
        if not self.remote_home:
            self.remote_home = f"/home/{self.remote_user}"
        if not self.remote_home.startswith("/"):
            raise ValueError("remote_home must be an absolute remote path")
        return self

    def runtime_argv(self, script: str) -> List[str]:
        """Instantiate runtime_command for a script, split shell-style."""
        return [part.replace(SCRIPT_PLACEHOLDER, script) for part in shlex.split(self.runtime_command)]


CONFIG_KEYS = frozenset(Config.model_fields)


def default_config_path() -> Path:
    return Path(os.environ.get("RBC_CONFIG", str(DEFAULT_CONFIG_PATH))).expanduser()


def _strip_quotes(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
        return value[1:-1]
    return value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse key=value lines. Returns the values and records each key's line."""
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedConfig(f"expected key=value, got {raw!r}", line_number, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise MalformedConfig(f"unknown key {key!r}", line_number, source)
        if key in values:
            raise MalformedConfig(f"duplicate key {key!r}", line_number, source)
        values[key] = _strip_quotes(value)
    return values


def _line_of(text: str, key: str) -> Optional[int]:
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith(key) and line[len(key):].lstrip().startswith("="):
            return line_number
    return None


def _apply_environment(values: Dict[str, str]) -> Dict[str, str]:
    overrides = {"RBC_STATE": "state_path", "RBC_PROVIDER_WORKDIR": "provider_workdir"}
    for env_name, key in overrides.items():
        if os.environ.get(env_name):
            values[key] = os.environ[env_name]
    return values


def load_config(path: Optional[Path] = None) -> Config:
    """Load Config from path, the RBC_CONFIG location, or built-in defaults."""
    explicit = path is not None
    config_path = Path(path).expanduser() if explicit else default_config_path()

    text = ""
    if config_path.is_file():
        try:
            text = config_path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise MalformedConfig(f"cannot read config: {e}", path=str(config_path))
        logger.debug(f"Loaded config file {config_path}")
    elif explicit:
        raise MalformedConfig("config file does not exist", path=str(config_path))
    else:
        logger.debug(f"No config at {config_path}, using built-in defaults")

    values = _apply_environment(parse_config_text(text, str(config_path)))
    try:
        return Config(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first.get("loc") else ""
        raise MalformedConfig(first["msg"], _line_of(text, key) if key else None, str(config_path))
