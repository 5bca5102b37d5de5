#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Configuration Manager for SNI Impute
Provides configuration loading, layering, validation and access.

Layers, lowest precedence first: built-in defaults, environment variables
(a .env file is honoured through python-dotenv), the JSON config file, and
explicit overrides (command-line flags).
"""

import os
import json
import copy
import logging
import jsonschema
from typing import Dict, Any, Optional

from dotenv import load_dotenv

from .error_handler import ConfigError
from .cpfa import CpfaConfig
from .sni_engine import SniConfig

SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schemas")

DEFAULT_CONFIG = {
    # attention model
    "heads": 4,
    "hidden_dims": [64, 32],
    "embed_dim": 32,
    "lr": 1e-3,
    "min_lr": 1e-6,
    "weight_decay": 1e-4,
    "batch": 128,
    "epochs": 50,
    "patience": 10,
    "label_smoothing": 0.1,
    "focal_gamma": 2.0,
    "gamma_prior": True,
    "freeze_lambda": False,
    "lambda_init": 1.0,
    # outer loop
    "rho": 0.15,
    "alpha0": 1.0,
    "gamma_decay": 0.9,
    "em_iters": 2,
    "tol": 1e-4,
    "fisher_z": False,
    "mask_aware": False,
    "split": [0.70, 0.15, 0.15],
    # runtime
    "seed": 1,
    "workers": 1,
    "deterministic": False,
    "knn_k": 5,
    "missing_tokens": ["", "NA"],
    "log_level": "INFO",
    "log_json": False,
    "error_log_path": None,
}

# Environment variable -> (config key, parser)
ENV_KEYS = {
    "SNI_SEED": ("seed", int),
    "SNI_WORKERS": ("workers", int),
    "SNI_LOG_LEVEL": ("log_level", str),
    "SNI_DETERMINISTIC": ("deterministic", lambda v: v.lower() == "true"),
    "SNI_ERROR_LOG": ("error_log_path", str),
}


def _update_dict(target: Dict[str, Any], source: Dict[str, Any]):
    for key, value in source.items():
        if isinstance(value, dict) and key in target and isinstance(target[key], dict):
            _update_dict(target[key], value)
        else:
            target[key] = value


class ConfigManager:
    """
    Effective configuration for one sni invocation.
    """

    def __init__(self, config_path: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 error_handler=None,
                 env_file: Optional[str] = None,
                 use_env: bool = True):
        """
        Initialize the configuration manager.

        Args:
            config_path: JSON configuration file (optional)
            overrides: Values taking precedence over every other layer
            error_handler: ErrorHandler instance for reporting configuration errors
            env_file: Explicit .env file; the default search applies when omitted
            use_env: Whether environment variables participate
        """
        self.config_path = config_path
        self.error_handler = error_handler
        self.logger = logging.getLogger('config_manager')
        self.schema = self._load_schema()

        self.config = copy.deepcopy(DEFAULT_CONFIG)
        try:
            if use_env:
                self._apply_environment(env_file)
            if config_path:
                self._apply_file(config_path)
            if overrides:
                _update_dict(self.config, {k: v for k, v in overrides.items() if v is not None})

            if self.config.get("deterministic"):
                self.config["workers"] = 1

            self._validate_config(self.config)
        except ConfigError as e:
            if self.error_handler:
                self.error_handler.handle_error(
                    error_type="config_error",
                    error_message=e.message,
                    exception=e,
                    severity="high",
                    category="config",
                )
            raise

    def _load_schema(self) -> Dict[str, Any]:
        schema_path = os.path.join(SCHEMA_DIR, "config.schema.json")
        with open(schema_path, 'r') as f:
            return json.load(f)

    def _apply_environment(self, env_file: Optional[str]):
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        for env_name, (key, parse) in ENV_KEYS.items():
            raw = os.getenv(env_name)
            if raw is None or raw == "":
                continue
            try:
                self.config[key] = parse(raw)
            except ValueError as e:
                raise ConfigError(f"Environment variable {env_name}={raw!r} is invalid: {e}",
                                  context={"variable": env_name})
            self.logger.debug(f"Config key {key} taken from environment variable {env_name}")

    def _apply_file(self, config_path: str):
        if not os.path.exists(config_path):
            raise ConfigError(f"Configuration file not found: {config_path}",
                              context={"path": config_path})
        try:
            with open(config_path, 'r') as f:
                file_config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file {config_path} is not valid JSON: {e}",
                              context={"path": config_path})
        if not isinstance(file_config, dict):
            raise ConfigError(f"Configuration file {config_path} must contain a JSON object")

        _update_dict(self.config, file_config)
        self.logger.info(f"Loaded configuration from {config_path}")

    def _validate_config(self, config_data: Dict[str, Any]):
        """
        Validate configuration against the JSON schema and cross-key rules.

        Args:
            config_data: Configuration data to validate

        Raises:
            ConfigError: naming the offending key
        """
        try:
            jsonschema.validate(instance=config_data, schema=self.schema)
        except jsonschema.exceptions.ValidationError as e:
            key = ".".join(str(p) for p in e.absolute_path) or "<root>"
            raise ConfigError(f"Configuration validation failed for {key}: {e.message}", context={"key": key})

        if config_data["patience"] > config_data["epochs"]:
            raise ConfigError("Configuration validation failed for patience: must not exceed epochs",
                              context={"key": "patience"})
        if config_data["min_lr"] > config_data["lr"]:
            raise ConfigError("Configuration validation failed for min_lr: must not exceed lr",
                              context={"key": "min_lr"})
        if abs(sum(config_data["split"]) - 1.0) > 1e-9:
            raise ConfigError("Configuration validation failed for split: fractions must sum to 1",
                              context={"key": "split"})

    def get_config(self, key: Optional[str] = None, default: Any = None) -> Any:
        """
        Get configuration value.

        Args:
            key: Configuration key (dot notation supported for nested access)
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        if key is None:
            return self.config

        current = self.config
        for part in key.split('.'):
            if isinstance(current, dict) and part in current:
                current = current[part]
            else:
                return default
        return current

    def update_config(self, updates: Dict[str, Any]):
        """
        Merge updates into the configuration and re-validate.

        Args:
            updates: Dictionary of updates to apply
        """
        candidate = copy.deepcopy(self.config)
        _update_dict(candidate, updates)
        self._validate_config(candidate)
        self.config = candidate

    def save_config(self, config_file: str):
        """Write the effective configuration as JSON."""
        with open(config_file, 'w') as f:
            json.dump(self.config, f, indent=2, sort_keys=True)
        self.logger.info(f"Saved configuration to {config_file}")

    def as_dict(self) -> Dict[str, Any]:
        """Effective configuration, echoed into reports."""
        return copy.deepcopy(self.config)

    def cpfa_config(self) -> CpfaConfig:
        c = self.config
        return CpfaConfig(
            heads=c["heads"],
            hidden_dims=tuple(c["hidden_dims"]),
            embed_dim=c["embed_dim"],
            lr=c["lr"],
            min_lr=c["min_lr"],
            weight_decay=c["weight_decay"],
            batch=c["batch"],
            epochs=c["epochs"],
            patience=c["patience"],
            label_smoothing=c["label_smoothing"],
            focal_gamma=c["focal_gamma"],
            gamma_prior_enabled=c["gamma_prior"],
            freeze_lambda=c["freeze_lambda"],
            lambda_init=c["lambda_init"],
        )

    def sni_config(self) -> SniConfig:
        c = self.config
        return SniConfig(
            rho=c["rho"],
            alpha0=c["alpha0"],
            gamma_decay=c["gamma_decay"],
            em_iters=c["em_iters"],
            tol=c["tol"],
            mask_aware=c["mask_aware"],
            fisher_z=c["fisher_z"],
            split=tuple(c["split"]),
            seed=c["seed"],
            workers=c["workers"],
            cpfa=self.cpfa_config(),
        )
