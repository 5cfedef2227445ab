"""Deterministic C-V2X sidelink Mode 4 simulator for an urban RSU scenario."""

from __future__ import annotations

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
