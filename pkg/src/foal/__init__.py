"""Cross-domain aspect sentiment triplet extraction with fine-grained contrastive learning."""
from .data import Sentence, Sentiment, Span, TransferPair, Triplet
from .objectives import Hyperparams

__all__ = ["Sentence", "Sentiment", "Span", "Triplet", "TransferPair", "Hyperparams"]
__version__ = "0.1.0"
