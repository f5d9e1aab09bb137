"""Gaze-based binary classification with a hybrid self-attention / state-space model."""

__version__ = "0.1.0"
