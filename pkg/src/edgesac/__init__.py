"""Soft actor-critic resource allocation for simulated athlete-monitoring edge networks."""

__version__ = "0.1.0"
