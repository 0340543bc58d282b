"""
Pipeline Configuration
Dotted-key settings loaded from defaults, an optional JSON file and CLI overrides.
Secrets come only from the environment (.env is read on import).
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterator, Mapping, Optional

from dotenv import load_dotenv

from cai.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    'chunk.window_words': 80,
    'chunk.overlap_words': 20,
    'relevance.backend': 'lexical',
    'relevance.threshold': 0.5,
    'relevance.lexical_threshold': 0.7,
    'relevance.batch_size': 32,
    'relevance.max_in_flight': 4,
    'relevance.merge_overlap': False,
    'embedding.backend': 'baseline',
    'embedding.dimension': 1024,
    'embedding.max_in_flight': 4,
    'llm.backend': 'mock',
    'llm.temperature': 0.0,
    'llm.top_p': 0.0,
    'llm.top_k': 1,
    'llm.seed': None,
    'llm.max_concurrency': 4,
    'llm.requests_per_minute': 60,
    'llm.max_input_tokens': 8192,
    'llm.max_output_tokens': 1024,
    'llm.max_attempts': 3,
    'llm.timeout_seconds': 60,
    'llm.backoff_seconds': 1.0,
    'prompt.k_shots': 6,
    'prompt.max_k': 10,
    'validate.min_year': 1990,
    'validate.max_year': 2100,
    'validate.fy_pivot': 49,
    'dedup.threshold': 0.95,
    'corpus.converter_command': None,
    'corpus.default_year': 2023,
    'corpus.strip_carriage': True,
    'pipeline.workers': 1,
    'paths.cache': 'cache',
    'paths.examples': 'data/examples.jsonl',
    'paths.golden': 'data/golden.jsonl',
    'paths.output': 'output',
    'paths.debug': 'debug.jsonl',
    'paths.rejects': 'rejects.jsonl',
    'bench.seed': 42,
    'bench.cv_samples': 6,
    'bench.train_fraction': 0.7,
    'bench.chunk_sizes': [60, 80, 100, 120, 160],
    'bench.k_range': list(range(1, 11)),
    'logging.level': os.getenv('LOG_LEVEL', 'INFO'),
    'logging.file': None,
}

BACKEND_CHOICES = {
    'relevance.backend': ('lexical', 'remote'),
    'embedding.backend': ('baseline', 'remote'),
    'llm.backend': ('mock', 'remote'),
}

# (url variable, token variable) per remote backend
SECRET_ENV = {
    'llm': ('CAI_LLM_URL', 'CAI_LLM_TOKEN'),
    'relevance': ('CAI_RELEVANCE_URL', 'CAI_RELEVANCE_TOKEN'),
    'embedding': ('CAI_EMBED_URL', 'CAI_EMBED_TOKEN'),
}


def _flatten(data: Mapping[str, Any], prefix: str = '') -> Dict[str, Any]:
    flat = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


class PipelineConfig:
    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        self._values = copy.deepcopy(DEFAULTS)
        if values:
            unknown = sorted(set(values) - set(DEFAULTS))
            if unknown:
                raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
            self._values.update(values)
        self.validate()

    @classmethod
    def load(cls, path: Optional[str] = None,
             overrides: Optional[Mapping[str, Any]] = None) -> 'PipelineConfig':
        """
        Build a config from a JSON file (nested or dotted keys) plus overrides.
        Overrides whose value is None are ignored so unset CLI flags fall through.
        """
        values: Dict[str, Any] = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text(encoding='utf-8'))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config file {path}: {e}") from e
            if not isinstance(raw, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            values.update(_flatten(raw))
            logger.info(f"Loaded config file {path} ({len(values)} keys)")
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        return cls(values)

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'PipelineConfig':
        values = dict(self._values)
        values.update(overrides)
        return PipelineConfig(values)

    def validate(self):
        v = self._values
        window, overlap = v['chunk.window_words'], v['chunk.overlap_words']
        if not (isinstance(window, int) and isinstance(overlap, int) and 0 < overlap < window):
            raise ConfigError(
                f"chunk.overlap_words must satisfy 0 < overlap < window (got {overlap}, {window})")
        for key in ('relevance.threshold', 'relevance.lexical_threshold', 'dedup.threshold',
                    'llm.temperature', 'llm.top_p', 'bench.train_fraction'):
            value = v[key]
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise ConfigError(f"{key} must be in [0, 1] (got {value!r})")
        for key, choices in BACKEND_CHOICES.items():
            if v[key] not in choices:
                raise ConfigError(f"{key} must be one of {', '.join(choices)} (got {v[key]!r})")
        for key in ('prompt.k_shots', 'prompt.max_k', 'llm.top_k', 'llm.max_concurrency',
                    'llm.requests_per_minute', 'llm.max_attempts', 'llm.max_input_tokens',
                    'llm.max_output_tokens', 'relevance.batch_size', 'relevance.max_in_flight',
                    'embedding.dimension', 'embedding.max_in_flight', 'pipeline.workers',
                    'bench.cv_samples'):
            if not isinstance(v[key], int) or v[key] < 1:
                raise ConfigError(f"{key} must be a positive integer (got {v[key]!r})")
        if v['prompt.k_shots'] > v['prompt.max_k']:
            raise ConfigError(
                f"prompt.k_shots ({v['prompt.k_shots']}) exceeds prompt.max_k ({v['prompt.max_k']})")
        if not v['validate.min_year'] < v['validate.max_year']:
            raise ConfigError("validate.min_year must be below validate.max_year")
        if not 0 <= v['validate.fy_pivot'] <= 99:
            raise ConfigError("validate.fy_pivot must be within 0..99")
        for key in ('relevance.merge_overlap', 'corpus.strip_carriage'):
            if not isinstance(v[key], bool):
                raise ConfigError(f"{key} must be true or false (got {v[key]!r})")

    def __getitem__(self, key: str) -> Any:
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key}") from None

    def get(self, key: str, default: Any = None) -> Any:
        return self._values.get(key, default)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._values))

    def as_dict(self) -> Dict[str, Any]:
        return dict(self._values)

    def output_path(self, key: str) -> Path:
        """Resolve a paths.* entry; relative entries live under paths.output."""
        value = Path(self[key])
        if key == 'paths.output' or value.is_absolute():
            return value
        return Path(self['paths.output']) / value

    def secrets(self, backend: str) -> Dict[str, Optional[str]]:
        url_var, token_var = SECRET_ENV[backend]
        return {'url': os.getenv(url_var), 'token': os.getenv(token_var)}
