"""Rate-of-speech aware hybrid HMM/neural-network speech recognizer."""

__version__ = "0.1.0"
