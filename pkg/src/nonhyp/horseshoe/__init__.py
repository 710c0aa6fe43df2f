"""Graph transforms on admissible disks, symbolic coding and the
horseshoe near a nonhyperbolic transverse homoclinic point."""
from __future__ import annotations

from .coding import coding_family, find_periodic_point, periodic_disk, verify_conjugacy, word_disk
from .disks import (AdmissibleDisk, BranchError, BranchTooThinError, NotAGraphError, auto_tune_k, dist1,
                    flat_disk, graph_transform, random_admissible_disk, verify_contraction)
from .inclination import cover_check, cover_until, track_inclination
from .pipeline import run_horseshoe
from .symbols import SymbolWord, champernowne, primitive_words, symbol_metric
from .system import ChartedSystem, builtin_homoclinic_system, linear_toy_system, load_system

__all__ = [
    "AdmissibleDisk", "BranchError", "BranchTooThinError", "ChartedSystem", "NotAGraphError", "SymbolWord",
    "auto_tune_k", "builtin_homoclinic_system", "champernowne", "coding_family", "cover_check", "cover_until",
    "dist1", "find_periodic_point", "flat_disk", "graph_transform", "linear_toy_system", "load_system",
    "periodic_disk", "primitive_words", "random_admissible_disk", "run_horseshoe", "symbol_metric",
    "track_inclination", "verify_conjugacy", "verify_contraction", "word_disk",
]
