"""Synthetic virtualization-obfuscation testbed."""

__version__ = "0.1.0"
