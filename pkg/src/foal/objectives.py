"""Training objectives: ASTE likelihood, cross-domain contrastive loss, joint loss.

The contrastive loss treats the indicator as a selection mask: only
(source, target) pairs whose labels agree and whose target confidence
exceeds ``t`` contribute ``-log softmax`` terms, while the softmax
denominators range over every feature of the opposite domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

LOG_EPS = math.log(1e-12)


class DegenerateFeatureError(ValueError):
    """Zero-norm feature, for which cosine similarity is undefined."""


@dataclass
class LabeledFeature:
    vector: torch.Tensor
    label: int
    domain: str  # "source" | "target"
    confidence: float = 1.0
    is_pseudo: bool = False


@dataclass
class FeatureSet:
    """Stacked features of one domain at one granularity."""

    vectors: torch.Tensor  # (N, D)
    labels: torch.Tensor  # (N,) long
    confidence: torch.Tensor  # (N,)
    domain: str
    is_pseudo: bool = False

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def empty(cls, dim: int, domain: str, dtype=torch.float64) -> "FeatureSet":
        return cls(
            torch.zeros(0, dim, dtype=dtype),
            torch.zeros(0, dtype=torch.long),
            torch.zeros(0, dtype=dtype),
            domain,
            is_pseudo=(domain == "target"),
        )

    @classmethod
    def from_features(cls, feats: Sequence[LabeledFeature], domain: str, dim: int | None = None) -> "FeatureSet":
        if not feats:
            return cls.empty(dim or 0, domain)
        if any(f.domain != domain for f in feats):
            raise ValueError(f"mixed domains in a {domain} feature set")
        return cls(
            torch.stack([f.vector for f in feats]),
            torch.tensor([f.label for f in feats], dtype=torch.long),
            torch.tensor([f.confidence for f in feats], dtype=feats[0].vector.dtype),
            domain,
            is_pseudo=any(f.is_pseudo for f in feats),
        )

    @classmethod
    def cat(cls, parts: Sequence["FeatureSet"], domain: str, dim: int) -> "FeatureSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty(dim, domain)
        return cls(
            torch.cat([p.vectors for p in parts]),
            torch.cat([p.labels for p in parts]),
            torch.cat([p.confidence for p in parts]),
            domain,
            is_pseudo=any(p.is_pseudo for p in parts),
        )


@dataclass
class FeatureBank:
    source: FeatureSet
    target: FeatureSet
    granularity: str  # "phrase" | "pair"


@dataclass
class Hyperparams:
    tau: float = 20.0
    t: float = 0.93
    lam: float = 0.3
    z: float = 0.5
    alpha: int = 5
    mean_reduce: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not 0.0 < self.z <= 1.0:
            raise ValueError("z must lie in (0, 1]")


def aste_loss(
    span_log_probs: torch.Tensor,
    span_labels: torch.Tensor,
    pair_log_probs: torch.Tensor | None = None,
    pair_labels: torch.Tensor | None = None,
) -> torch.Tensor:
    """Summed negative log-likelihood of gold span types and gold relations.

    Inputs are log-probabilities (rows over classes); unlabeled spans and
    pairs must already carry the Invalid class.
    """
    loss = -span_log_probs.gather(1, span_labels.view(-1, 1)).sum()
    if pair_log_probs is not None and pair_log_probs.shape[0]:
        loss = loss - pair_log_probs.gather(1, pair_labels.view(-1, 1)).sum()
    return loss


def indicator(source_feat: LabeledFeature, target_feat: LabeledFeature, t: float) -> int:
    if source_feat.domain != "source" or target_feat.domain != "target":
        raise ValueError("indicator takes a source feature then a target feature")
    return int(source_feat.label == target_feat.label and target_feat.confidence > t)


def similarity(x_i: torch.Tensor, x_j: torch.Tensor, tau: float) -> torch.Tensor:
    ni, nj = x_i.norm(), x_j.norm()
    if ni == 0 or nj == 0:
        raise DegenerateFeatureError("cosine similarity of a zero vector")
    return torch.exp(torch.dot(x_i, x_j) / (ni * nj) / tau)


def _unit_rows(x: torch.Tensor) -> torch.Tensor:
    norms = x.norm(dim=1, keepdim=True)
    if bool((norms == 0).any()):
        raise DegenerateFeatureError("feature set contains a zero vector")
    return x / norms


def positive_mask(source: FeatureSet, target: FeatureSet, t: float) -> torch.Tensor:
    """(|S|, |T|) boolean indicator matrix."""
    same = source.labels.view(-1, 1) == target.labels.view(1, -1)
    return same & (target.confidence.view(1, -1) > t)


def contrastive_loss(
    source: FeatureSet, target: FeatureSet, t: float, tau: float, mean_reduce: bool = False
) -> torch.Tensor:
    if len(source) == 0 or len(target) == 0:
        dtype = source.vectors.dtype if len(source) else target.vectors.dtype
        return torch.zeros((), dtype=dtype)
    logits = _unit_rows(source.vectors) @ _unit_rows(target.vectors).T / tau
    mask = positive_mask(source, target, t).to(logits.dtype)
    # source -> target: softmax over target features for each source row
    log_st = torch.clamp(logits - torch.logsumexp(logits, dim=1, keepdim=True), min=LOG_EPS)
    # target -> source: softmax over source features for each target row
    log_ts = torch.clamp(logits - torch.logsumexp(logits, dim=0, keepdim=True), min=LOG_EPS)
    loss = -(mask * log_st).sum() - (mask * log_ts).sum()
    if mean_reduce:
        count = 2 * mask.sum()
        if count > 0:
            loss = loss / count
    return loss


def contrastive_term_count(source: FeatureSet, target: FeatureSet, t: float) -> int:
    if len(source) == 0 or len(target) == 0:
        return 0
    return 2 * int(positive_mask(source, target, t).sum())


def total_contrastive(phrase_bank: FeatureBank, pair_bank: FeatureBank, t: float, tau: float, mean_reduce: bool = False) -> torch.Tensor:
    return contrastive_loss(phrase_bank.source, phrase_bank.target, t, tau, mean_reduce) + contrastive_loss(
        pair_bank.source, pair_bank.target, t, tau, mean_reduce
    )


def final_loss(l_aste, l_contra, lam: float):
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return l_aste + lam * l_contra
