"""
Configuration Management for vl-distill
Handles run-config loading, environment overrides and validation
"""

import copy
import json
import os
from pathlib import Path
from typing import Any, ClassVar, Dict, Optional, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError

from src.core.errors import ConfigInvalid, VLDistillError

ENV_LLM_ENDPOINT = "VLD_LLM_ENDPOINT"
ENV_FIXTURE_PATH = "VLD_FIXTURE_PATH"
ENV_LLM_MODEL = "VLD_LLM_MODEL"
ENV_LOG_LEVEL = "VLD_LOG_LEVEL"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

ModelT = TypeVar("ModelT", bound="ValidatedModel")


class ValidatedModel(BaseModel):
    """pydantic model whose validation failures surface as toolkit errors"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    error_type: ClassVar[Type[VLDistillError]] = ConfigInvalid

    @classmethod
    def parse(cls: Type[ModelT], data: Optional[Dict[str, Any]] = None, **overrides: Any) -> ModelT:
        """
        Build and validate a config record

        Args:
            data: Field values (may be None)
            **overrides: Values that take precedence over data

        Returns:
            Validated instance
        """
        values = dict(data or {})
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise cls.error_type(f"Invalid {cls.__name__}: {e.errors(include_url=False)}")


class Config:
    """Configuration manager for vl-distill runs"""

    # Default configuration values
    DEFAULTS = {
        'dataset': {
            'kind': 'synthetic',
            'num_classes': 32,
            'embed_dim': 20,
            'samples_per_class': 20,
            'ood_fraction': 0.5,
            'noise': 0.3,
        },
        'teacher': {'cache_dir': None},
        'losses': {'enabled': ['cls', 'im_cst']},
        'train': {},
        'student': {'hidden': [64]},
        'fewshot': {'shots': 5, 'epochs': 0},
        'retrieval': {'alpha': 1.0, 'beta': 5.5},
        'enrichment': {'style': 'plain', 'description_cache': './data/descriptions.jsonl'},
        'output': {'dir': './runs'},
        'llm': {'client': 'groq', 'model_name': 'llama-3.3-70b-versatile', 'endpoint': None,
                'fixture_path': None, 'temperature': 0.7, 'max_tokens': 128,
                'caption_model': 'llava', 'caption_fixture_path': None},
        'log_level': 'INFO',
        'seed': 0,
    }

    SECTIONS = ('dataset', 'teacher', 'losses', 'train', 'student', 'fewshot', 'retrieval',
                'enrichment', 'output', 'llm')

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration

        Args:
            config_path: Optional path to a YAML or JSON config file
        """
        self.config = copy.deepcopy(self.DEFAULTS)
        self.source = None

        if config_path:
            self.load_from_file(config_path)

        # Load environment variables
        self.load_from_env()

    def load_from_file(self, config_path: str):
        """
        Load configuration from a YAML (or JSON) file

        Args:
            config_path: Path to config file
        """
        path = Path(config_path)
        if not path.exists():
            raise ConfigInvalid(f"Config file not found: {config_path}", path=str(config_path))
        try:
            with open(path, 'r', encoding='utf-8') as f:
                file_config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigInvalid(f"Could not parse config file {config_path}: {e}", path=str(config_path))
        if not isinstance(file_config, dict):
            raise ConfigInvalid(f"Config file {config_path} must hold a key/value document")

        unknown = [k for k in file_config if k not in self.DEFAULTS]
        if unknown:
            raise ConfigInvalid(f"Unknown config keys: {sorted(unknown)}")

        # Sections merge key by key, scalars replace
        for key, value in file_config.items():
            if key in self.SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigInvalid(f"Config section '{key}' must be a mapping")
                self.config[key].update(value)
            else:
                self.config[key] = value
        self.source = str(path)

    def load_from_env(self):
        """Load configuration from environment variables (and a .env file if present)"""
        load_dotenv()

        if os.getenv(ENV_LLM_ENDPOINT):
            self.config['llm']['endpoint'] = os.getenv(ENV_LLM_ENDPOINT)

        if os.getenv(ENV_FIXTURE_PATH):
            self.config['llm']['fixture_path'] = os.getenv(ENV_FIXTURE_PATH)
            self.config['llm']['client'] = 'fixture'

        if os.getenv(ENV_LLM_MODEL):
            self.config['llm']['model_name'] = os.getenv(ENV_LLM_MODEL)

        if os.getenv('GROQ_API_KEY'):
            self.config['llm']['groq_api_key'] = os.getenv('GROQ_API_KEY')

        if os.getenv(ENV_LOG_LEVEL):
            self.config['log_level'] = os.getenv(ENV_LOG_LEVEL)

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value; dotted keys reach into sections ("train.epochs")

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        node: Any = self.config
        for part in key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any):
        """
        Set configuration value; dotted keys reach into sections

        Args:
            key: Configuration key
            value: Configuration value
        """
        parts = key.split('.')
        node = self.config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        return copy.deepcopy(self.config.get(name, {}))

    def get_all(self) -> Dict[str, Any]:
        """
        Get all configuration values

        Returns:
            Dict of all config values
        """
        return copy.deepcopy(self.config)

    def snapshot(self) -> Dict[str, Any]:
        """Config values safe to persist in a run manifest (no API keys)"""
        return _strip_secrets(self.get_all())

    def save_to_file(self, config_path: str):
        """
        Save configuration to a YAML file

        Args:
            config_path: Path to save config file
        """
        Path(config_path).parent.mkdir(parents=True, exist_ok=True)

        # Don't save API keys to file
        with open(config_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.snapshot(), f, sort_keys=True)

    def validate(self, require_llm: bool = False) -> tuple[bool, list[str]]:
        """
        Validate configuration

        Args:
            require_llm: Also check the LLM client settings (enrich / caption commands)

        Returns:
            Tuple of (is_valid, list_of_errors)
        """
        errors = []

        if self.config['dataset'].get('kind') not in ('synthetic', 'manifest'):
            errors.append(f"Invalid dataset.kind: {self.config['dataset'].get('kind')}")

        if self.config['dataset'].get('kind') == 'manifest':
            if not self.config['dataset'].get('root'):
                errors.append("dataset.root not set for a manifest dataset")
            if not self.config['teacher'].get('cache_dir'):
                errors.append("teacher.cache_dir not set for a manifest dataset")

        if self.config['llm'].get('client') not in ('groq', 'ollama', 'fixture'):
            errors.append(f"Invalid llm.client: {self.config['llm'].get('client')}")

        if require_llm and self.config['llm'].get('client') == 'groq' and not self.config['llm'].get('groq_api_key'):
            errors.append("GROQ_API_KEY not set for Groq client")

        shots = self.config['fewshot'].get('shots', 5)
        if not isinstance(shots, int) or shots < 1:
            errors.append(f"fewshot.shots must be a positive integer: {shots}")

        if str(self.config.get('log_level')).upper() not in LOG_LEVELS:
            errors.append(f"Invalid log_level: {self.config.get('log_level')}")

        if not isinstance(self.config.get('seed'), int):
            errors.append(f"seed must be an integer: {self.config.get('seed')}")

        return len(errors) == 0, errors


def _strip_secrets(node: Any) -> Any:
    if isinstance(node, dict):
        return {k: _strip_secrets(v) for k, v in node.items() if 'api_key' not in k.lower()}
    return node


def dump_json(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline"""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
