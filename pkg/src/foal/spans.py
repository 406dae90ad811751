"""Span enumeration, span representations, span typing and pruning."""
from __future__ import annotations

import math
from enum import IntEnum
from typing import Sequence

import torch
from torch import nn

from .data import Span


class SpanLabel(IntEnum):
    ASPECT = 0
    OPINION = 1
    INVALID = 2


ACTIVATIONS = {"gelu": nn.GELU, "relu": nn.ReLU, "tanh": nn.Tanh}


class FeedForward(nn.Module):
    """One hidden layer scorer; returns logits."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, activation: str = "gelu"):
        super().__init__()
        self.hidden = nn.Linear(in_dim, hidden)
        self.act = ACTIVATIONS[activation]()
        self.out = nn.Linear(hidden, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.out(self.act(self.hidden(x)))


class WidthEmbedding(nn.Module):
    def __init__(self, max_width: int, dim: int):
        super().__init__()
        self.max_width = max_width
        self.table = nn.Embedding(max_width, dim)

    def bucket(self, width: int) -> int:
        return min(width, self.max_width) - 1

    def forward(self, widths: torch.Tensor) -> torch.Tensor:
        return self.table(widths.clamp(max=self.max_width) - 1)


def enumerate_spans(n: int, max_width: int) -> list[Span]:
    if n < 1:
        raise ValueError("need at least one token")
    return [
        Span(i, j)
        for i in range(n)
        for j in range(i, min(n, i + max_width))
    ]


def span_representation(h: torch.Tensor, span: Span, width_emb: WidthEmbedding) -> torch.Tensor:
    if span.end >= h.shape[0]:
        raise IndexError(f"span {span} outside sentence of {h.shape[0]} tokens")
    width = width_emb(torch.tensor([span.width]))[0]
    return torch.cat([h[span.start], h[span.end], width])


def span_representations(h: torch.Tensor, spans: Sequence[Span], width_emb: WidthEmbedding) -> torch.Tensor:
    """Batched ``span_representation`` over a span list, shape (len(spans), 2d + d_w)."""
    starts = torch.tensor([s.start for s in spans], dtype=torch.long)
    ends = torch.tensor([s.end for s in spans], dtype=torch.long)
    if len(spans) and int(ends.max()) >= h.shape[0]:
        raise IndexError("span outside sentence")
    return torch.cat([h[starts], h[ends], width_emb(ends - starts + 1)], dim=-1)


def classify_span(rep: torch.Tensor, ffn: FeedForward) -> torch.Tensor:
    """P(Aspect, Opinion, Invalid | span)."""
    return torch.softmax(ffn(rep), dim=-1)


def top_k(scores: torch.Tensor, k: int) -> list[int]:
    """Indices of the k highest scores; ties keep the earlier index first."""
    order = torch.sort(scores, descending=True, stable=True).indices
    return order[:k].tolist()


def prune_size(n: int, z: float) -> int:
    if not 0 < z <= 1:
        raise ValueError("pruning ratio z must lie in (0, 1]")
    return math.ceil(n * z)


def prune_spans(probs: torch.Tensor, n: int, z: float) -> tuple[list[int], list[int]]:
    """Dual-channel pruning over span probabilities (rows aligned with spans).

    Returns indices of the aspect and opinion candidates, each sorted by its
    channel probability, highest first.
    """
    k = min(prune_size(n, z), probs.shape[0])
    probs = probs.detach()
    return top_k(probs[:, SpanLabel.ASPECT], k), top_k(probs[:, SpanLabel.OPINION], k)
