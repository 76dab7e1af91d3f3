import logging
import os
from typing import Any, Dict, Optional

import yaml
from pydantic import ValidationError

from multitax.src.exceptions import ConfigError
from multitax.src.models.run_config import RunConfig

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "../config")


class ConfigLoader:
    _configs: Dict[str, RunConfig] = {}
    _config: Optional[RunConfig] = None

    @classmethod
    def resolve_path(cls, name_or_path: str) -> str:
        if os.path.exists(name_or_path):
            return os.path.abspath(name_or_path)
        candidate = os.path.join(CONFIG_DIR, f"{name_or_path}.yaml")
        if os.path.exists(candidate):
            return os.path.abspath(candidate)
        raise ConfigError(f"❌ No config named or located at '{name_or_path}'")

    @classmethod
    def load_config(cls, name_or_path: str = "baseline") -> RunConfig:
        """
        Loads and validates a run configuration.

        Bare names resolve to ``multitax/config/<name>.yaml``. Parsed configs are
        cached per path so repeated loads return the same object.

        Args:
            name_or_path (str): Config name or path to a YAML file.

        Returns:
            RunConfig: The validated configuration.
        """
        path = cls.resolve_path(name_or_path)
        if path not in cls._configs:
            try:
                with open(path, "r", encoding="utf-8") as file:
                    raw = yaml.safe_load(file) or {}
            except (OSError, yaml.YAMLError) as e:
                raise ConfigError(f"❌ Could not read config {path}: {e}") from e
            cls._configs[path] = cls.from_dict(raw, source=path)
            logger.info(f"⚙️ Loaded config '{cls._configs[path].name}' from {path}")
        cls._config = cls._configs[path]
        return cls._config

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], source: str = "<dict>") -> RunConfig:
        if not isinstance(raw, dict):
            raise ConfigError(f"❌ Config {source} must be a mapping")
        try:
            return RunConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"❌ Invalid config {source}: {e}") from e

    @classmethod
    def get_config_value(cls, key: str, default: Any = None) -> Optional[Any]:
        """
        Retrieve a dotted key (``solver.target_eps``) from the loaded configuration.
        """
        if cls._config is None:
            raise ConfigError("Configuration not loaded. Please call load_config first.")
        value: Any = cls._config
        for part in key.split("."):
            if not hasattr(value, part):
                return default
            value = getattr(value, part)
        return value

    @classmethod
    def dump_resolved(cls, config: RunConfig, path: str) -> str:
        """Writes the fully resolved config so a run can be repeated exactly."""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as file:
            yaml.safe_dump(config.model_dump(mode="json"), file, sort_keys=True)
        return path

    @classmethod
    def reset(cls):
        cls._configs = {}
        cls._config = None
