"""Bita: a conversational assistant for fairness testing.

Retrieval-backed chat plus three structured tasks (bias detection, test
plan review, exploratory charter generation), with every recommendation
grounded in a local fairness-literature corpus.
"""

__version__ = "0.1.0"
