"""Provenance-driven script curation and reproducible time capsules."""

__version__ = "0.1.0"
