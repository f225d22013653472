"""One-vs-all NER with direct AUC maximization."""

__version__ = "0.1.0"
