"""Convolutional gated-recurrent seizure detection: features, networks, training and scoring."""

__version__ = "0.1.0"
