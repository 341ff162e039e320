"""Distributed localization of mobile agents through virtual convex hulls."""

__version__ = "0.1.0"
