"""Training and evaluation pipeline for hierarchical offensive-language and
hate-speech classification with contrastive and multi-task objectives."""

__version__ = "0.1.0"
