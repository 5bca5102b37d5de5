#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit tests for the log formatter module
"""

import io
import os
import sys
import json
import logging
import unittest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
from sni_impute.log_formatter import JSONFormatter, setup_logger


class TestLogFormatter(unittest.TestCase):
    """Test cases for JSONFormatter and setup_logger"""

    def tearDown(self):
        logging.getLogger().handlers.clear()
        logging.getLogger().setLevel(logging.WARNING)

    def record(self, **extra):
        record = logging.LogRecord("sni_engine", logging.INFO, __file__, 1, "iteration %d done", (2,), None)
        for key, value in extra.items():
            setattr(record, key, value)
        return record

    def test_json_fields(self):
        doc = json.loads(JSONFormatter().format(self.record(feature="age", iteration=2)))
        self.assertEqual(doc["message"], "iteration 2 done")
        self.assertEqual(doc["logger"], "sni_engine")
        self.assertEqual(doc["level"], "INFO")
        self.assertEqual((doc["feature"], doc["iteration"]), ("age", 2))
        self.assertIn("timestamp", doc)
        self.assertNotIn("type", doc)

    def test_json_without_timestamp(self):
        doc = json.loads(JSONFormatter(include_timestamp=False).format(self.record()))
        self.assertEqual(set(doc), {"level", "logger", "message"})

    def test_setup_logger_json(self):
        stream = io.StringIO()
        setup_logger("DEBUG", json_format=True, deterministic=True, stream=stream)
        logging.getLogger("benchmark").debug("row", extra={"type": "benchmark"})
        doc = json.loads(stream.getvalue().strip())
        self.assertEqual(doc, {"level": "DEBUG", "logger": "benchmark", "message": "row", "type": "benchmark"})

    def test_setup_logger_replaces_handlers(self):
        setup_logger("INFO", stream=io.StringIO())
        root = setup_logger("warning", deterministic=True, stream=io.StringIO())
        self.assertEqual(len(root.handlers), 1)
        self.assertEqual(root.level, logging.WARNING)

    def test_plain_deterministic_format(self):
        stream = io.StringIO()
        setup_logger("INFO", deterministic=True, stream=stream)
        logging.getLogger("cli").info("done")
        self.assertEqual(stream.getvalue(), "cli - INFO - done\n")


if __name__ == '__main__':
    unittest.main()
