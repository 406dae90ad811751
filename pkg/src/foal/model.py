"""Span-based triplet extractor: encode, enumerate, score, prune, pair, classify."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import nn

from .data import Sentence, Span, Triplet
from .encoder import EncoderConfig, build_encoder, encode
from .pairs import (
    DEFAULT_DISTANCE_BUCKETS,
    RELATION_TO_SENTIMENT,
    SENTIMENT_TO_RELATION,
    DistanceEmbedding,
    PairKey,
    RelationLabel,
    form_pairs,
)
from .spans import FeedForward, SpanLabel, WidthEmbedding, enumerate_spans, prune_spans, span_representations


@dataclass
class ModelConfig:
    max_width: int = 8
    width_dim: int = 20
    distance_dim: int = 128
    distance_buckets: list[int] = field(default_factory=lambda: list(DEFAULT_DISTANCE_BUCKETS))
    span_hidden: int = 150
    pair_hidden: int = 150
    activation: str = "gelu"


@dataclass
class SentenceOutput:
    spans: list[Span]
    span_reps: torch.Tensor
    span_log_probs: torch.Tensor
    aspect_idx: list[int]
    opinion_idx: list[int]
    pairs: list[PairKey]
    pair_reps: torch.Tensor
    pair_log_probs: torch.Tensor
    num_candidate_pairs: int  # pairs beyond this index were injected from gold
    hidden: torch.Tensor

    @property
    def span_probs(self) -> torch.Tensor:
        return self.span_log_probs.exp()

    @property
    def pair_probs(self) -> torch.Tensor:
        return self.pair_log_probs.exp()

    def phrase_candidates(self) -> list[int]:
        """Union of both pruned channels, aspect channel first, no repeats."""
        return list(dict.fromkeys(self.aspect_idx + self.opinion_idx))


class SpanTripletModel(nn.Module):
    def __init__(
        self,
        encoder_config: EncoderConfig,
        config: ModelConfig,
        z: float = 0.5,
        encoder: nn.Module | None = None,
    ):
        super().__init__()
        self.z = z
        self.encoder_config = encoder_config
        self.config = config
        self.encoder = encoder if encoder is not None else build_encoder(encoder_config)
        d = getattr(self.encoder, "hidden_size", encoder_config.hidden_size)
        self.hidden_size = d
        self.width_embedding = WidthEmbedding(config.max_width, config.width_dim)
        self.span_dim = 2 * d + config.width_dim
        self.span_ffn = FeedForward(self.span_dim, config.span_hidden, len(SpanLabel), config.activation)
        self.distance_embedding = DistanceEmbedding(config.distance_dim, config.distance_buckets)
        self.pair_dim = 2 * self.span_dim + config.distance_dim
        self.pair_ffn = FeedForward(self.pair_dim, config.pair_hidden, len(RelationLabel), config.activation)

    def encoder_parameters(self):
        return list(self.encoder.parameters())

    def head_parameters(self):
        enc = {id(p) for p in self.encoder.parameters()}
        return [p for p in self.parameters() if id(p) not in enc]

    def forward(self, tokens: Sequence[str], gold: Sequence[Triplet] | None = None) -> SentenceOutput:
        """Run the full pipeline on one sentence.

        With ``gold`` given, gold pairs missing from the pruned product are
        appended after the candidate pairs.
        """
        h = encode(tokens, self.encoder)
        n = len(tokens)
        spans = enumerate_spans(n, self.config.max_width)
        reps = span_representations(h, spans, self.width_embedding)
        span_log_probs = torch.log_softmax(self.span_ffn(reps), dim=-1)
        aspect_idx, opinion_idx = prune_spans(span_log_probs.exp(), n, self.z)

        pairs = form_pairs([spans[i] for i in aspect_idx], [spans[j] for j in opinion_idx])
        a_rows = [i for i in aspect_idx for _ in opinion_idx]
        o_rows = [j for _ in aspect_idx for j in opinion_idx]
        num_candidates = len(pairs)
        if gold:
            index = {s: k for k, s in enumerate(spans)}
            present = set(pairs)
            for trip in gold:
                key = PairKey(trip.aspect, trip.opinion)
                if key in present or trip.aspect not in index or trip.opinion not in index:
                    continue
                present.add(key)
                pairs.append(key)
                a_rows.append(index[trip.aspect])
                o_rows.append(index[trip.opinion])

        if pairs:
            pair_reps = torch.cat(
                [reps[a_rows], reps[o_rows], self.distance_embedding(pairs).to(reps.dtype)], dim=-1
            )
            pair_log_probs = torch.log_softmax(self.pair_ffn(pair_reps), dim=-1)
        else:
            pair_reps = reps.new_zeros(0, self.pair_dim)
            pair_log_probs = reps.new_zeros(0, len(RelationLabel))
        return SentenceOutput(
            spans=spans,
            span_reps=reps,
            span_log_probs=span_log_probs,
            aspect_idx=aspect_idx,
            opinion_idx=opinion_idx,
            pairs=pairs,
            pair_reps=pair_reps,
            pair_log_probs=pair_log_probs,
            num_candidate_pairs=num_candidates,
            hidden=h,
        )


def gold_span_labels(spans: Sequence[Span], gold: Sequence[Triplet]) -> torch.Tensor:
    """Aspect wins over Opinion when a span plays both roles."""
    aspects = {t.aspect for t in gold}
    opinions = {t.opinion for t in gold}
    labels = []
    for s in spans:
        if s in aspects:
            labels.append(SpanLabel.ASPECT)
        elif s in opinions:
            labels.append(SpanLabel.OPINION)
        else:
            labels.append(SpanLabel.INVALID)
    return torch.tensor(labels, dtype=torch.long)


def gold_pair_labels(pairs: Sequence[PairKey], gold: Sequence[Triplet]) -> torch.Tensor:
    relation = {PairKey(t.aspect, t.opinion): SENTIMENT_TO_RELATION[t.sentiment] for t in gold}
    return torch.tensor(
        [relation.get(k, RelationLabel.INVALID) for k in pairs], dtype=torch.long
    )


def decode_output(out: SentenceOutput) -> set[Triplet]:
    triplets = set()
    if not out.pairs:
        return triplets
    best = out.pair_log_probs[: out.num_candidate_pairs].argmax(dim=-1).tolist()
    for key, r in zip(out.pairs, best):
        if r != RelationLabel.INVALID:
            triplets.add(Triplet(key.aspect, key.opinion, RELATION_TO_SENTIMENT[RelationLabel(r)]))
    return triplets


@torch.no_grad()
def decode_triplets(sentence: Sentence, model: SpanTripletModel) -> set[Triplet]:
    was_training = model.training
    model.eval()
    try:
        return decode_output(model(sentence.tokens))
    finally:
        model.train(was_training)
