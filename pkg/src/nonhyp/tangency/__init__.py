"""Flattening a quasitransverse tangency: delta0, t(xi), P = log C, the
homeomorphism h and the conjugated center map."""
from __future__ import annotations

from .center import (BracketError, CenterGenerator, MatrixLogError, ScaledVector, apply_h, composed_center_map,
                     conjugated_center_map, invert_h, real_matrix_log, tau)
from .flatten import FlatteningError, FlatteningFunction, TimeReparam, build_delta0, build_time_reparam
from .pipeline import PipelineError, TransformedSystem, delta_from_g, flatness_report, quasitransverse_pipeline

__all__ = [
    "BracketError", "CenterGenerator", "FlatteningError", "FlatteningFunction", "MatrixLogError", "PipelineError",
    "ScaledVector", "TimeReparam", "TransformedSystem", "apply_h", "build_delta0", "build_time_reparam",
    "composed_center_map", "conjugated_center_map", "delta_from_g", "flatness_report", "invert_h",
    "quasitransverse_pipeline", "real_matrix_log", "tau",
]
