"""Radiomic feature robustness analysis on simulated and real MR phantoms."""

__version__ = "0.1.0"
