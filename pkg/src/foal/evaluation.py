"""Exact-match triplet F1 and MMD-based representation discrepancy."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from scipy.spatial.distance import cdist, pdist

from .data import Sentence, Triplet
from .model import SpanTripletModel, decode_triplets, gold_pair_labels, gold_span_labels
from .pairs import RelationLabel
from .spans import SpanLabel

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    num_pred: int
    num_gold: int
    num_correct: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "num_pred": self.num_pred,
                "num_gold": self.num_gold,
                "num_correct": self.num_correct,
            },
        }


def exact_match_f1(pred: Sequence[Iterable[Triplet]], gold: Sequence[Iterable[Triplet]]) -> EvalReport:
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} prediction sets for {len(gold)} gold sets")
    n_pred = n_gold = n_correct = 0
    for p, g in zip(pred, gold):
        p, g = set(p), set(g)
        n_pred += len(p)
        n_gold += len(g)
        n_correct += len(p & g)
    precision = n_correct / n_pred if n_pred else 0.0
    recall = n_correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalReport(precision, recall, f1, n_pred, n_gold, n_correct)


def evaluate(model: SpanTripletModel, sentences: Sequence[Sentence]) -> EvalReport:
    preds = [decode_triplets(s, model) for s in sentences]
    return exact_match_f1(preds, [s.gold or [] for s in sentences])


# --- MMD ---------------------------------------------------------------------

def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled sample (1.0 if degenerate)."""
    pooled = np.concatenate([x, y], axis=0)
    if pooled.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def rbf_kernel(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * bandwidth**2))


def mmd(x, y, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) MMD with an RBF kernel, returned as a distance (square root).

    ``bandwidth`` defaults to the median heuristic on the pooled sample.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or len(x) == 0 or len(y) == 0:
        raise ValueError("mmd needs two non-empty 2-D samples")
    if x.shape[1] != y.shape[1]:
        raise ValueError("samples differ in dimension")
    if bandwidth is None:
        bandwidth = median_bandwidth(x, y)
    kxx = rbf_kernel(x, x, bandwidth).mean()
    kyy = rbf_kernel(y, y, bandwidth).mean()
    kxy = rbf_kernel(x, y, bandwidth).mean()
    return float(np.sqrt(max(kxx + kyy - 2.0 * kxy, 0.0)))


# --- representation dumps and discrepancy report -----------------------------

@dataclass
class FeatureDump:
    """Per-feature rows: vector, granularity, class id, domain."""

    vectors: dict = field(default_factory=lambda: {"phrase": [], "pair": []})
    labels: dict = field(default_factory=lambda: {"phrase": [], "pair": []})
    domains: dict = field(default_factory=lambda: {"phrase": [], "pair": []})

    def add(self, granularity: str, vectors: np.ndarray, labels: Sequence[int], domain: str):
        self.vectors[granularity].extend(vectors)
        self.labels[granularity].extend(int(c) for c in labels)
        self.domains[granularity].extend([domain] * len(labels))

    def arrays(self, granularity: str):
        vecs = np.asarray(self.vectors[granularity], dtype=np.float64)
        return vecs, np.asarray(self.labels[granularity]), np.asarray(self.domains[granularity])

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for gran in ("phrase", "pair"):
                for vec, label, dom in zip(self.vectors[gran], self.labels[gran], self.domains[gran]):
                    fh.write(json.dumps({
                        "vector": [float(v) for v in vec],
                        "granularity": gran,
                        "class": label,
                        "domain": dom,
                    }) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "FeatureDump":
        dump = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                dump.add(rec["granularity"], np.asarray([rec["vector"]]), [rec["class"]], rec["domain"])
        return dump


@torch.no_grad()
def extract_features(model: SpanTripletModel, sentences: Sequence[Sentence], domain: str, dump: FeatureDump | None = None) -> FeatureDump:
    """Phrase and pair representations of the pruned candidates plus gold items, gold-labeled."""
    dump = dump or FeatureDump()
    was_training = model.training
    model.eval()
    try:
        for sent in sentences:
            gold = sent.gold or []
            out = model(sent.tokens, gold=gold)
            rows = out.phrase_candidates()
            in_rows = set(rows)
            span_index = {s: k for k, s in enumerate(out.spans)}
            for trip in gold:
                for s in (trip.aspect, trip.opinion):
                    k = span_index.get(s)
                    if k is not None and k not in in_rows:
                        rows.append(k)
                        in_rows.add(k)
            span_labels = gold_span_labels([out.spans[k] for k in rows], gold)
            dump.add("phrase", out.span_reps[rows].double().numpy(), span_labels.tolist(), domain)
            if out.pairs:
                dump.add("pair", out.pair_reps.double().numpy(), gold_pair_labels(out.pairs, gold).tolist(), domain)
    finally:
        model.train(was_training)
    return dump


CLASS_NAMES = {
    "phrase": {int(c): c.name.lower() for c in SpanLabel},
    "pair": {int(c): c.name.lower() for c in RelationLabel},
}


@dataclass
class DiscrepancyReport:
    values: dict  # granularity -> {domain_mmd, intra_class_mmd, inter_class_mmd}
    skipped: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=lambda: {
        "estimator": "biased V-statistic, square root",
        "kernel": "rbf",
        "bandwidth": "median pairwise distance of the pooled pair of samples",
    })

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        lines = [f"{'granularity':<12}{'domain':>10}{'intra':>10}{'inter':>10}"]
        for gran, vals in self.values.items():
            lines.append(
                f"{gran:<12}{vals['domain_mmd']:>10.4f}{vals['intra_class_mmd']:>10.4f}{vals['inter_class_mmd']:>10.4f}"
            )
        return "\n".join(lines)


def discrepancy_from_features(
    src_vecs: np.ndarray, src_labels: np.ndarray, tgt_vecs: np.ndarray, tgt_labels: np.ndarray
) -> tuple[dict, list]:
    """domain / intra-class / inter-class MMD for one granularity.

    intra: mean over classes present in both domains of mmd(source c, target c).
    inter: mean over unordered class pairs of mmd(pooled c, pooled c').
    """
    skipped = []
    domain = mmd(src_vecs, tgt_vecs)
    classes = sorted(set(src_labels.tolist()) | set(tgt_labels.tolist()))
    intra = []
    for c in classes:
        xs, xt = src_vecs[src_labels == c], tgt_vecs[tgt_labels == c]
        if len(xs) == 0 or len(xt) == 0:
            skipped.append(int(c))
            continue
        intra.append(mmd(xs, xt))
    pooled = np.concatenate([src_vecs, tgt_vecs])
    pooled_labels = np.concatenate([src_labels, tgt_labels])
    inter = [
        mmd(pooled[pooled_labels == a], pooled[pooled_labels == b])
        for a, b in itertools.combinations(classes, 2)
    ]
    values = {
        "domain_mmd": domain,
        "intra_class_mmd": float(np.mean(intra)) if intra else 0.0,
        "inter_class_mmd": float(np.mean(inter)) if inter else 0.0,
    }
    return values, skipped


def discrepancy_report(model: SpanTripletModel, source: Sequence[Sentence], target: Sequence[Sentence], dump: FeatureDump | None = None) -> DiscrepancyReport:
    if dump is None:
        dump = extract_features(model, source, "source")
        extract_features(model, target, "target", dump)
    return report_from_dump(dump)


def report_from_dump(dump: FeatureDump) -> DiscrepancyReport:
    values, skipped = {}, {}
    for gran in ("phrase", "pair"):
        vecs, labels, domains = dump.arrays(gran)
        src, tgt = domains == "source", domains == "target"
        if not src.any() or not tgt.any():
            raise ValueError(f"no {gran} features for one of the domains")
        values[gran], missing = discrepancy_from_features(vecs[src], labels[src], vecs[tgt], labels[tgt])
        if missing:
            names = [CLASS_NAMES[gran][c] for c in missing]
            log.info("%s: class(es) %s empty in one domain, skipped for intra-class MMD", gran, names)
            skipped[gran] = names
    return DiscrepancyReport(values=values, skipped=skipped)
