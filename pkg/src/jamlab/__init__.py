"""Desk-scale laboratory for adversarial failure modes of quantum repeater protocols."""

__version__ = "0.1.0"
