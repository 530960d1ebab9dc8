"""Simulator and verification harness for lethal-interaction chemotaxis."""

__version__ = "1.0.0"
