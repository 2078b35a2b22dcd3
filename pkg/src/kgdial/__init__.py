"""Knowledge-grounded task-oriented dialog pipeline."""

__version__ = "0.1.0"
