"""Organizational workflow mining over message-level event logs."""

__version__ = "0.1.0"
