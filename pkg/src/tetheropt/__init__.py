"""Co-optimization of tether-net capture designs with a graph-learned recommender."""

__version__ = "0.1.0"
