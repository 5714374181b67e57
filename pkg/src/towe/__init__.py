"""Target-oriented opinion word extraction as BIO tagging."""

__version__ = "0.1.0"
