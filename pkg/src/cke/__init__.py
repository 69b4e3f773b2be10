"""Chained Diffie-Hellman key exchange with an encrypted TFTP-style transfer."""

__version__ = "0.1.0"
