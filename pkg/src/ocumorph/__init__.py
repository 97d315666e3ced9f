"""Ocular morphing toolkit: landmark-guided morph generation, evaluation, and detection."""

__version__ = "0.1.0"
