"""Aspect-opinion pairing, distance features and relation typing."""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import torch
from torch import nn

from .data import Sentiment, Span
from .spans import FeedForward

# lower bounds of the buckets {0, 1, 2, 3, 4, 5-7, 8-15, 16-31, 32+}
DEFAULT_DISTANCE_BUCKETS = (0, 1, 2, 3, 4, 5, 8, 16, 32)


class RelationLabel(IntEnum):
    POSITIVE = 0
    NEGATIVE = 1
    NEUTRAL = 2
    INVALID = 3


SENTIMENT_TO_RELATION = {
    Sentiment.POSITIVE: RelationLabel.POSITIVE,
    Sentiment.NEGATIVE: RelationLabel.NEGATIVE,
    Sentiment.NEUTRAL: RelationLabel.NEUTRAL,
}
RELATION_TO_SENTIMENT = {v: k for k, v in SENTIMENT_TO_RELATION.items()}


@dataclass(frozen=True)
class PairKey:
    aspect: Span
    opinion: Span


def form_pairs(aspects: Sequence[Span], opinions: Sequence[Span]) -> list[PairKey]:
    return [PairKey(a, o) for a in aspects for o in opinions]


def pair_distance(key: PairKey) -> int:
    a, o = key.aspect, key.opinion
    if a.start <= o.end and o.start <= a.end:
        return 0
    if o.start > a.end:
        return o.start - a.end
    return a.start - o.end


def distance_bucket(distance: int, buckets: Sequence[int] = DEFAULT_DISTANCE_BUCKETS) -> int:
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    return bisect.bisect_right(buckets, distance) - 1


class DistanceEmbedding(nn.Module):
    def __init__(self, dim: int, buckets: Sequence[int] = DEFAULT_DISTANCE_BUCKETS):
        super().__init__()
        if list(buckets) != sorted(set(buckets)) or buckets[0] != 0:
            raise ValueError("distance buckets must be strictly increasing lower bounds starting at 0")
        self.buckets = tuple(buckets)
        self.table = nn.Embedding(len(self.buckets), dim)

    def forward(self, keys: Sequence[PairKey]) -> torch.Tensor:
        idx = torch.tensor(
            [distance_bucket(pair_distance(k), self.buckets) for k in keys], dtype=torch.long
        )
        return self.table(idx)


def pair_representation(s_a: torch.Tensor, s_o: torch.Tensor, key: PairKey, dist_emb: DistanceEmbedding) -> torch.Tensor:
    return torch.cat([s_a, s_o, dist_emb([key])[0]])


def classify_pair(rep: torch.Tensor, ffn: FeedForward) -> torch.Tensor:
    """P(Positive, Negative, Neutral, Invalid | pair)."""
    return torch.softmax(ffn(rep), dim=-1)
