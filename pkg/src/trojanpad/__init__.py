"""Trojan data-poisoning toolkit for a synthetic landing-zone classifier."""

__version__ = "0.1.0"
