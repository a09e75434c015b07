"""Unsupervised coarse-to-fine salient-object segmentation for video."""

__version__ = "0.1.0"
