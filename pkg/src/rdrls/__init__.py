"""Robust diffusion RLS estimation over sensor networks."""

__version__ = "0.1.0"
