"""Fairness audit and equal-opportunity threshold correction for a weighted random forest."""
__version__ = "0.1.0"
