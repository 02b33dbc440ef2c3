"""Predicting which online communities join a distributed campaign."""

__version__ = "0.1.0"
