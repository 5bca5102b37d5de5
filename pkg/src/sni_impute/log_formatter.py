import json
import logging
import sys
from datetime import datetime, timezone

EXTRA_FIELDS = ("type", "feature", "iteration")


class JSONFormatter(logging.Formatter):
    def __init__(self, include_timestamp=True):
        super().__init__()
        self.include_timestamp = include_timestamp

    def format(self, record):
        log_record = {}
        if self.include_timestamp:
            log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["message"] = record.getMessage()
        for field in EXTRA_FIELDS:
            value = getattr(record, field, None)
            if value is not None:
                log_record[field] = value
        return json.dumps(log_record)


def setup_logger(log_level="INFO", json_format=False, deterministic=False, stream=None):
    """Configure the root logger once for the command-line workflows."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    if json_format:
        handler.setFormatter(JSONFormatter(include_timestamp=not deterministic))
    elif deterministic:
        handler.setFormatter(logging.Formatter('%(name)s - %(levelname)s - %(message)s'))
    else:
        handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))

    root.addHandler(handler)
    root.setLevel(getattr(logging, str(log_level).upper(), logging.INFO))
    return root
