"""A small compiler for FFT algorithms written as matrix factorizations."""

from __future__ import annotations

__version__ = "0.1.0"
