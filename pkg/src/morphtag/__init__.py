"""Morpheme-level tagging for agglutinative languages: bi-LSTM and bi-LSTM-CRF
taggers trained from scratch on pre-segmented words, plus aligned multiset F1
evaluation."""

__version__ = "0.1.0"
