#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Error Handler for SNI Impute
Provides the exception hierarchy raised by the library and a centralized
handler that logs, counts and persists errors for the command-line workflows.
"""

import os
import json
import logging
import traceback
from typing import Dict, Any, Optional, Callable
from datetime import datetime
from functools import wraps


class SniError(Exception):
    """Base class for every error raised by sni_impute."""

    category = "system"
    severity = "high"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}


class ConfigError(SniError, ValueError):
    """Invalid configuration value or hyperparameter."""

    category = "config"


class SchemaError(SniError, ValueError):
    """Table schema does not match the data or violates its invariants."""

    category = "data"


class DataError(SniError, ValueError):
    """Malformed table contents or inputs violating an operation's precondition."""

    category = "data"


class ShapeError(SniError, ValueError):
    """Array shapes inconsistent with the computation graph."""

    category = "model"


class EstimationError(SniError, RuntimeError):
    """Numerical procedure could not produce an estimate."""

    category = "model"


class UsageError(SniError):
    """Command-line misuse (unknown subcommand, bad flag value)."""

    category = "usage"
    severity = "medium"


class ErrorHandler:
    """
    Centralized error handling for the sni command-line workflows.
    Tracks error occurrences, logs them by severity and optionally appends
    them to a JSON error log.
    """

    # Error severity levels
    SEVERITY_CRITICAL = "critical"  # Run cannot continue
    SEVERITY_HIGH = "high"          # Command failed
    SEVERITY_MEDIUM = "medium"      # Command rejected, nothing computed
    SEVERITY_LOW = "low"            # Degraded result
    SEVERITY_INFO = "info"

    # Error categories
    CATEGORY_CONFIG = "config"      # Configuration errors
    CATEGORY_DATA = "data"          # Table parsing and content errors
    CATEGORY_MODEL = "model"        # Training and estimation errors
    CATEGORY_USAGE = "usage"        # Command-line misuse
    CATEGORY_SYSTEM = "system"      # File system and everything else

    EXIT_OK = 0
    EXIT_RUNTIME = 1
    EXIT_USAGE = 2

    def __init__(self, config_path: Optional[str] = None,
                 config: Optional[Dict[str, Any]] = None):
        """
        Initialize the error handler.

        Args:
            config_path: Path to the error handler configuration file
            config: Configuration dictionary (overrides config_path if provided)
        """
        self.logger = logging.getLogger('error_handler')
        self.config = {}
        self.error_counts = {}
        self.records = []

        if config:
            self.config = config
        elif config_path and os.path.exists(config_path):
            try:
                with open(config_path, 'r') as f:
                    self.config = json.load(f)
            except Exception as e:
                self.logger.error(f"Failed to load error handler config from {config_path}: {e}")
                self.config = {}

        # No error log file unless one is configured
        self.error_log_path = self.config.get('error_log_path')
        self.include_timestamps = not self.config.get('deterministic', False)
        if self.error_log_path:
            log_dir = os.path.dirname(self.error_log_path)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            if not os.path.exists(self.error_log_path):
                with open(self.error_log_path, 'w') as f:
                    json.dump([], f)

    def handle_error(self, error_type: str, error_message: str,
                     exception: Optional[BaseException] = None,
                     severity: Optional[str] = None,
                     category: Optional[str] = None,
                     context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Handle an error by logging it, counting it and persisting it.

        Args:
            error_type: Type of error
            error_message: Error message
            exception: Exception object if available
            severity: Error severity level (taken from the exception when omitted)
            category: Error category (taken from the exception when omitted)
            context: Additional context information

        Returns:
            Dictionary with the error record
        """
        if severity is None:
            severity = getattr(exception, 'severity', self.SEVERITY_HIGH)
        if category is None:
            category = getattr(exception, 'category', self.CATEGORY_SYSTEM)
        if context is None and isinstance(exception, SniError):
            context = exception.context or None

        stack_trace = None
        if exception is not None and self.config.get('include_stack_trace', False):
            stack_trace = ''.join(traceback.format_exception(
                type(exception), exception, exception.__traceback__))

        error_record = {
            "type": error_type,
            "message": error_message,
            "severity": severity,
            "category": category,
            "context": context,
            "stack_trace": stack_trace,
        }
        if self.include_timestamps:
            error_record["timestamp"] = datetime.now().isoformat()

        self._log_error(error_record)
        self.error_counts[error_type] = self.error_counts.get(error_type, 0) + 1
        self.records.append(error_record)
        if self.error_log_path:
            self._update_error_log(error_record)

        return error_record

    def _log_error(self, error_record: Dict[str, Any]):
        message = (f"ERROR [{error_record['severity']}] {error_record['category']}: "
                   f"{error_record['type']} - {error_record['message']}")

        if error_record['severity'] == self.SEVERITY_CRITICAL:
            self.logger.critical(message)
        elif error_record['severity'] in (self.SEVERITY_HIGH, self.SEVERITY_MEDIUM):
            self.logger.error(message)
        elif error_record['severity'] == self.SEVERITY_LOW:
            self.logger.warning(message)
        else:
            self.logger.info(message)

    def _update_error_log(self, error_record: Dict[str, Any]):
        try:
            error_log = []
            if os.path.exists(self.error_log_path):
                with open(self.error_log_path, 'r') as f:
                    error_log = json.load(f)

            error_log.append(error_record)

            max_log_size = self.config.get('max_log_size', 1000)
            if len(error_log) > max_log_size:
                error_log = error_log[-max_log_size:]

            with open(self.error_log_path, 'w') as f:
                json.dump(error_log, f, indent=2)
        except Exception as e:
            self.logger.error(f"Failed to update error log: {e}")

    def exit_code(self, exception: BaseException) -> int:
        """
        Map an exception onto the command-line exit code contract.

        Args:
            exception: The exception that ended the command

        Returns:
            2 for usage errors, 1 for every other failure
        """
        if isinstance(exception, UsageError):
            return self.EXIT_USAGE
        return self.EXIT_RUNTIME

    def get_error_summary(self) -> Dict[str, Any]:
        """
        Get a summary of the errors handled so far.

        Returns:
            Dictionary with counts by type, category and severity
        """
        category_counts = {}
        severity_counts = {}
        for record in self.records:
            category_counts[record['category']] = category_counts.get(record['category'], 0) + 1
            severity_counts[record['severity']] = severity_counts.get(record['severity'], 0) + 1

        return {
            "total_errors": len(self.records),
            "by_type": dict(self.error_counts),
            "by_category": category_counts,
            "by_severity": severity_counts,
            "most_recent": self.records[-5:],
        }

    def error_decorator(self, error_type: str, severity: Optional[str] = None,
                        category: Optional[str] = None,
                        default: Any = None) -> Callable:
        """
        Decorator for handling errors in functions.

        Args:
            error_type: Type of error
            severity: Error severity level
            category: Error category
            default: Value returned when the error is swallowed

        Returns:
            Decorated function
        """
        def decorator(func):
            @wraps(func)
            def wrapper(*args, **kwargs):
                try:
                    return func(*args, **kwargs)
                except Exception as e:
                    self.handle_error(
                        error_type=error_type,
                        error_message=f"Error in {func.__name__}: {e}",
                        exception=e,
                        severity=severity,
                        category=category,
                        context={"function": func.__name__},
                    )
                    if self.config.get('reraise_exceptions', False):
                        raise
                    return default
            return wrapper
        return decorator
