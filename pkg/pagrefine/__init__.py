"""PAG-to-DAG refinement over state-expanded discrete data."""

__version__ = "0.1.1"
