"""Hinglish offensive / hate-inducing message classification pipeline."""

from codemix_hate.corpus import ClassLabel, LabeledCorpus, MessageRecord

__version__ = "0.1.0"

__all__ = ["ClassLabel", "LabeledCorpus", "MessageRecord", "__version__"]
