"""Evaluation toolkit for skeletal-pose sign language output."""

__version__ = "0.1.0"
