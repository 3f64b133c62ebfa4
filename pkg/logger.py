import logging
import json
import os
from datetime import datetime, timezone


class AuditLogger:
    def __init__(self, log_file=None, level=None):
        if log_file is None:
            log_file = os.getenv("LIBREDENSE_AUDIT_LOG", "audit_log.jsonl")
        # Empty path disables the file sink (tests, read-only checkouts)
        self.log_file = log_file or None

        self.logger = logging.getLogger("LibreDenseAudit")
        self.logger.setLevel(level or os.getenv("LIBREDENSE_LOG_LEVEL", "WARNING").upper())

        if not self.logger.handlers:
            ch = logging.StreamHandler()
            formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
            ch.setFormatter(formatter)
            self.logger.addHandler(ch)

    def set_level(self, level):
        self.logger.setLevel(level)

    def log_event(self, event_type, details):
        """
        Logs an event with a timestamp and structured details.

        Args:
            event_type (str): The type of event (e.g., "PLANTING_COMPLETED", "TRIAL_FAILED").
            details (dict): JSON-serializable data about the event.
        """
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "event_type": event_type,
            "details": details
        }

        if self.log_file:
            with open(self.log_file, 'a') as f:
                f.write(json.dumps(entry, default=str) + "\n")

        self.logger.info(f"Logged event: {event_type}")

    def warn(self, event_type, details):
        self.log_event(event_type, details)
        self.logger.warning(f"{event_type}: {json.dumps(details, default=str)}")


# Singleton instance for easy access
audit_logger = AuditLogger()
