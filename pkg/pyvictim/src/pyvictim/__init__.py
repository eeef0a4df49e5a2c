"""Victim adapter: hosts a depth estimator behind the stdio JSON-lines protocol."""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
