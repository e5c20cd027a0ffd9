"""Occupation-time functionals of heavy-tailed linear processes and their
local-time limits: simulation, estimation and Monte Carlo verification."""
from __future__ import annotations

__version__ = "0.1.0"
