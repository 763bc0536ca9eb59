"""Configs, persistence, sweeps and the command-line interface."""

from .config import ConfigError, RunConfig, load, parse_text
from .experiment import audit_record, build_initial, run_sweep, simulate

__all__ = ["ConfigError", "RunConfig", "load", "parse_text", "audit_record", "build_initial", "run_sweep", "simulate"]
