"""Peer-effect discrete choice with random peer selection."""
__version__ = "0.1.0"
