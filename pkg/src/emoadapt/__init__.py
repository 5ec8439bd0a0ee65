"""emoadapt: domain-adapted four-class image emotion classifier.

Trains an attention-gated CNN on a source image domain, re-trains a copy on
a shifted target domain with a combined cross-entropy / output-discrepancy /
L2 objective, and explains the layers via an embedding-overlap score.
"""

__version__ = "0.1.0"

CLASS_NAMES = ("angry", "happy", "sad", "neutral")
