"""clinsynth: synthetic clinical transcript generation and evaluation toolkit."""

__version__ = "0.1.0"
