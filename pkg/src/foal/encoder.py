"""Word-level contextual encoders.

Two implementations share one call signature, ``encoder(tokens) -> (n, d)``:

* ``ToyEncoder``: seeded hash embeddings plus one window-3 mixing layer.
  Cheap, deterministic, and trainable end to end; used by tests and the
  synthetic experiments.
* ``PretrainedEncoder``: a hub transformer with first-subword pooling.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn


class EncoderInitError(RuntimeError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass
class EncoderConfig:
    kind: str = "toy"  # "toy" | "pretrained"
    hidden_size: int = 64
    pretrained_name: str | None = None
    seed: int = 0
    num_buckets: int = 8192
    embedding_scale: float = 1.0  # toy only: std of the hash embedding table

    def __post_init__(self):
        if self.kind not in ("toy", "pretrained"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.hidden_size <= 0:
            raise ValueError("hidden_size must be positive")


def token_bucket(token: str, seed: int, num_buckets: int) -> int:
    return zlib.crc32(f"{seed}\x1f{token}".encode("utf-8")) % num_buckets


class ToyEncoder(nn.Module):
    def __init__(self, hidden_size: int = 64, seed: int = 0, num_buckets: int = 8192, embedding_scale: float = 1.0):
        super().__init__()
        self.hidden_size = hidden_size
        self.seed = seed
        self.num_buckets = num_buckets
        gen = torch.Generator().manual_seed(seed)
        self.embedding = nn.Parameter(embedding_scale * torch.randn(num_buckets, hidden_size, generator=gen))
        bound = (3 * hidden_size) ** -0.5
        self.mix_weight = nn.Parameter(
            (torch.rand(hidden_size, 3 * hidden_size, generator=gen) * 2 - 1) * bound
        )
        self.mix_bias = nn.Parameter(torch.zeros(hidden_size))
        self.norm = nn.LayerNorm(hidden_size)

    def forward(self, tokens: Sequence[str]) -> torch.Tensor:
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty sentence")
        ids = torch.tensor(
            [token_bucket(tok, self.seed, self.num_buckets) for tok in tokens]
        )
        emb = self.embedding[ids]
        pad = emb.new_zeros(1, self.hidden_size)
        padded = torch.cat([pad, emb, pad], dim=0)
        window = torch.cat([padded[:-2], padded[1:-1], padded[2:]], dim=1)
        return self.norm(emb + torch.tanh(window @ self.mix_weight.T + self.mix_bias))


def align_subwords(
    word_count: int, subword_vectors: torch.Tensor, word_to_subword: Sequence[Sequence[int]]
) -> torch.Tensor:
    """Pick each word's first subword vector."""
    if len(word_to_subword) != word_count:
        raise AlignmentError(
            f"map covers {len(word_to_subword)} words, sentence has {word_count}"
        )
    first = []
    for w, pieces in enumerate(word_to_subword):
        if len(pieces) == 0:
            raise AlignmentError(f"word {w} has no subwords")
        first.append(pieces[0])
    return subword_vectors[torch.tensor(first, dtype=torch.long)]


class PretrainedEncoder(nn.Module):
    def __init__(self, name: str):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer

            self.tokenizer = AutoTokenizer.from_pretrained(name, use_fast=True)
            self.model = AutoModel.from_pretrained(name)
        except Exception as exc:  # hub / filesystem / config errors all surface here
            raise EncoderInitError(f"cannot load pretrained encoder {name!r}: {exc}") from exc
        self.name = name
        self.hidden_size = self.model.config.hidden_size

    def forward(self, tokens: Sequence[str]) -> torch.Tensor:
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty sentence")
        batch = self.tokenizer(list(tokens), is_split_into_words=True, return_tensors="pt", truncation=True)
        word_ids = batch.word_ids(0)
        out = self.model(**{k: v.to(self.model.device) for k, v in batch.items()})
        pieces: list[list[int]] = [[] for _ in tokens]
        for pos, w in enumerate(word_ids):
            if w is not None:  # [CLS]/[SEP] carry no word id and are dropped
                pieces[w].append(pos)
        return align_subwords(len(tokens), out.last_hidden_state[0], pieces)


def build_encoder(config: EncoderConfig) -> nn.Module:
    if config.kind == "toy":
        return ToyEncoder(config.hidden_size, config.seed, config.num_buckets, config.embedding_scale)
    if not config.pretrained_name:
        raise EncoderInitError("pretrained encoder requires pretrained_name")
    return PretrainedEncoder(config.pretrained_name)


def encode(tokens: Sequence[str], encoder: nn.Module) -> torch.Tensor:
    """(n, d) token representations; raises on empty input or non-finite output."""
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty sentence")
    h = encoder(tokens)
    if h.shape[0] != len(tokens):
        raise AlignmentError(f"encoder returned {h.shape[0]} rows for {len(tokens)} tokens")
    if not bool(torch.isfinite(h).all()):
        raise FloatingPointError("encoder produced non-finite values")
    return h
