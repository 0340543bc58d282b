"""
Configuration Validator
Checks settings, data files and credentials before a pipeline run

Features:
- Validates the dotted-key config (ranges, backend names)
- Checks the example store and golden dataset are readable
- Verifies the output directory exists or can be created
- Checks URL/token environment variables for every remote backend selected
"""

import logging
import os
from pathlib import Path
from typing import Optional

from cai.config import SECRET_ENV, PipelineConfig
from cai.errors import CAIError

logger = logging.getLogger(__name__)


class ConfigValidator:
    def __init__(self, config_path: Optional[str] = None, overrides: Optional[dict] = None):
        self.config_path = config_path
        self.overrides = overrides or {}
        self.config: Optional[PipelineConfig] = None
        self.errors = []
        self.warnings = []
        self.passed = []

    def validate_config(self) -> bool:
        try:
            self.config = PipelineConfig.load(self.config_path, self.overrides)
        except CAIError as e:
            self.errors.append(f"Invalid configuration: {e.message}")
            return False
        source = self.config_path or 'built-in defaults'
        self.passed.append(f"✓ Configuration valid ({source})")
        return True

    def validate_required_env(self, key: str, description: str) -> bool:
        value = os.getenv(key)
        if not value or value.startswith('your_'):
            self.errors.append(f"Missing {description}: {key}")
            return False
        self.passed.append(f"✓ {description}: {key}")
        return True

    def validate_optional_env(self, key: str, description: str) -> bool:
        value = os.getenv(key)
        if not value or value.startswith('your_'):
            self.warnings.append(f"Optional {description} not set: {key}")
            return False
        self.passed.append(f"✓ {description}: {key}")
        return True

    def validate_file(self, path: str, description: str, required: bool = True) -> bool:
        if Path(path).is_file():
            self.passed.append(f"✓ File exists: {description} ({path})")
            return True
        message = f"File missing: {description} ({path})"
        (self.errors if required else self.warnings).append(message)
        return False

    def validate_directory(self, path: str, description: str, create: bool = False) -> bool:
        if os.path.exists(path):
            self.passed.append(f"✓ Directory exists: {description} ({path})")
            return True
        if create:
            try:
                os.makedirs(path, exist_ok=True)
                self.passed.append(f"✓ Directory created: {description} ({path})")
                return True
            except OSError as e:
                self.errors.append(f"Cannot create directory {path}: {e}")
                return False
        self.warnings.append(f"Directory missing: {description} ({path})")
        return False

    def validate_backends(self):
        for stage in ('relevance', 'embedding', 'llm'):
            backend = self.config[f'{stage}.backend']
            url_var, token_var = SECRET_ENV[stage]
            if backend == 'remote':
                self.validate_required_env(url_var, f"{stage} endpoint")
                self.validate_optional_env(token_var, f"{stage} token")
            else:
                self.passed.append(f"✓ {stage} backend: {backend} (local)")

    def run_full_validation(self) -> bool:
        logger.info("=" * 60)
        logger.info("Pipeline Configuration Validation")
        logger.info("=" * 60)

        logger.info("[1] Settings")
        if self.validate_config():
            logger.info("[2] Model Backends")
            self.validate_backends()

            logger.info("[3] Data Files")
            self.validate_file(self.config['paths.examples'], "Golden example store")
            self.validate_file(self.config['paths.golden'], "Benchmark golden set",
                               required=False)

            logger.info("[4] Output Directory")
            self.validate_directory(self.config['paths.output'], "Output", create=True)

            if self.config['llm.temperature'] > 0:
                self.warnings.append(
                    f"llm.temperature is {self.config['llm.temperature']}; runs will not be "
                    "reproducible")

        logger.info("=" * 60)
        logger.info("VALIDATION RESULTS")
        logger.info("=" * 60)
        if self.passed:
            logger.info(f"✓ PASSED ({len(self.passed)}):")
            for msg in self.passed:
                logger.info(f"  {msg}")
        if self.warnings:
            logger.info(f"⚠ WARNINGS ({len(self.warnings)}):")
            for msg in self.warnings:
                logger.warning(f"  {msg}")
        if self.errors:
            logger.info(f"✗ ERRORS ({len(self.errors)}):")
            for msg in self.errors:
                logger.error(f"  {msg}")
        logger.info("=" * 60)

        if self.errors:
            logger.error("VALIDATION FAILED - Fix errors before running the pipeline")
            return False
        if self.warnings:
            logger.warning("VALIDATION PASSED with warnings - Some features may be limited")
        else:
            logger.info("VALIDATION PASSED - All settings look correct")
        return True
