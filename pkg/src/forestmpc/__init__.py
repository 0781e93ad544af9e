"""Deterministic forest decompositions and symmetry breaking on a simulated low-space MPC runtime."""
from __future__ import annotations

__version__ = "0.1.0"
