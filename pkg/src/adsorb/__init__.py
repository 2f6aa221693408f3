"""Adsorption-energy search: slabs, sites, placement, relaxation, LLM planning and metrics."""

__version__ = "0.1.0"
