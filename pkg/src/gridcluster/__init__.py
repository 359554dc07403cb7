"""Exploratory co-clustering of mixed-type data tables."""

__version__ = "0.1.0"
