"""A small numpy deep-learning engine with CNN families, metrics and soft-voting ensembles."""

__version__ = "0.1.0"
