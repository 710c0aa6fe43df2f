"""Config-driven experiment runner behind the ``nonhyp`` command."""
from __future__ import annotations

from .config import ConfigError, ExperimentConfig, resolve
from .manifest import RunManifest, verify_manifest
from .stages import PLOT_SCHEMAS, emit_plot_data, run

__all__ = ["ConfigError", "ExperimentConfig", "PLOT_SCHEMAS", "RunManifest", "emit_plot_data", "resolve", "run",
           "verify_manifest"]
