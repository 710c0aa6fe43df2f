"""Numerical toolkit for shadowing, horseshoes and tangency transforms near
nonhyperbolic fixed points."""
from __future__ import annotations

__version__ = "0.1.0"
