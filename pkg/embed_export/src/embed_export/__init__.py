"""Build per-lemma averaged context-vector stores from annotated corpora."""

__version__ = "0.1.0"
