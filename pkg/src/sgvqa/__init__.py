"""Siamese self-supervised scene-graph VQA on a synthetic corpus."""

__version__ = "0.1.0"
