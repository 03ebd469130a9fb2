"""Retail CBDC built from blind-signed, self-verifying USO assets."""

__version__ = "0.1.0"
