"""Joint training on labeled source and unlabeled target batches."""
from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .adversarial import AdversarialSchedule, AdversarialState, DomainDiscriminator, at_train_step
from .config import RunConfig
from .data import Sentence, TransferPair, serialize_sentence
from .evaluation import evaluate
from .model import SentenceOutput, SpanTripletModel, gold_pair_labels, gold_span_labels
from .objectives import FeatureBank, FeatureSet, aste_loss, final_loss, total_contrastive

log = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class NonFiniteLossError(FloatingPointError):
    pass


def build_model(config: RunConfig) -> SpanTripletModel:
    torch.manual_seed(config.train.seed)
    model = SpanTripletModel(config.encoder, config.model, z=config.hyper.z)
    return model.to(DTYPES[config.train.dtype])


def make_optimizer(model: SpanTripletModel, config: RunConfig) -> torch.optim.AdamW:
    tc = config.train
    return torch.optim.AdamW(
        [
            {"params": model.encoder_parameters(), "lr": tc.lr_encoder, "name": "encoder"},
            {"params": model.head_parameters(), "lr": tc.lr_classifier, "name": "classifier"},
        ],
        weight_decay=tc.weight_decay,
    )


@dataclass
class TrainState:
    model: SpanTripletModel
    optimizer: torch.optim.Optimizer
    config: RunConfig
    step: int = 0
    best_f1: float = -1.0
    adversarial: AdversarialState | None = None
    dump_dir: Path | None = None


# --- features ----------------------------------------------------------------

def source_features(out: SentenceOutput, gold) -> tuple[FeatureSet, FeatureSet]:
    rows = out.phrase_candidates()
    span_labels = gold_span_labels([out.spans[k] for k in rows], gold)
    pair_labels = gold_pair_labels(out.pairs, gold)
    dtype = out.span_reps.dtype
    phrase = FeatureSet(out.span_reps[rows], span_labels, torch.ones(len(rows), dtype=dtype), "source")
    pair = FeatureSet(out.pair_reps, pair_labels, torch.ones(len(out.pairs), dtype=dtype), "source")
    return phrase, pair


def _pseudo(vectors: torch.Tensor, log_probs: torch.Tensor) -> FeatureSet:
    probs = log_probs.detach().exp()
    if probs.shape[0] == 0:
        return FeatureSet(vectors, torch.zeros(0, dtype=torch.long), probs.new_zeros(0), "target", True)
    conf, labels = probs.max(dim=-1)  # ties resolve to the lowest class index
    return FeatureSet(vectors, labels, conf, "target", is_pseudo=True)


def assign_pseudo_labels(out: SentenceOutput) -> tuple[FeatureSet, FeatureSet]:
    """Label every pruned span and candidate pair of a target sentence with its argmax class.

    Nothing is filtered here; the confidence threshold is applied by the
    contrastive indicator.
    """
    rows = out.phrase_candidates()
    phrase = _pseudo(out.span_reps[rows], out.span_log_probs[rows])
    k = out.num_candidate_pairs
    pair = _pseudo(out.pair_reps[:k], out.pair_log_probs[:k])
    return phrase, pair


# --- losses ------------------------------------------------------------------

def source_outputs_and_loss(model: SpanTripletModel, batch: Sequence[Sentence], inject_gold: bool = True):
    total = None
    outs = []
    for sent in batch:
        gold = sent.gold or []
        out = model(sent.tokens, gold=gold if inject_gold else None)
        loss = aste_loss(
            out.span_log_probs,
            gold_span_labels(out.spans, gold),
            out.pair_log_probs,
            gold_pair_labels(out.pairs, gold),
        )
        total = loss if total is None else total + loss
        outs.append(out)
    return total, outs


def target_outputs(model: SpanTripletModel, batch) -> list[SentenceOutput]:
    # target sentences are only ever read through .tokens
    return [model(sent.tokens) for sent in batch]


def batch_losses(model: SpanTripletModel, source_batch, target_batch, config: RunConfig, step: int = 0) -> dict:
    hp, tc = config.hyper, config.train
    l_aste, src_outs = source_outputs_and_loss(model, source_batch, tc.inject_gold_pairs)
    use_contrastive = hp.lam > 0 and step >= tc.contrastive_warmup_steps and len(target_batch) > 0
    if use_contrastive:
        tgt_outs = target_outputs(model, target_batch)
        src = [source_features(o, s.gold or []) for o, s in zip(src_outs, source_batch)]
        tgt = [assign_pseudo_labels(o) for o in tgt_outs]
        phrase_bank = FeatureBank(
            FeatureSet.cat([p for p, _ in src], "source", model.span_dim),
            FeatureSet.cat([p for p, _ in tgt], "target", model.span_dim),
            "phrase",
        )
        pair_bank = FeatureBank(
            FeatureSet.cat([q for _, q in src], "source", model.pair_dim),
            FeatureSet.cat([q for _, q in tgt], "target", model.pair_dim),
            "pair",
        )
        l_contra = total_contrastive(phrase_bank, pair_bank, hp.t, hp.tau, hp.mean_reduce)
        total = final_loss(l_aste, l_contra, hp.lam)
    else:
        l_contra = torch.zeros((), dtype=l_aste.dtype)
        total = l_aste
    return {"l_aste": l_aste, "l_contra": l_contra, "l_total": total}


def check_finite(loss: torch.Tensor, source_batch, target_batch, state: TrainState) -> None:
    if torch.isfinite(loss).all():
        return
    dump = {
        "step": state.step,
        "loss": float(loss),
        "source_batch": [serialize_sentence(s) for s in source_batch],
        "target_batch": [" ".join(s.tokens) for s in target_batch],
    }
    where = ""
    if state.dump_dir is not None:
        path = Path(state.dump_dir) / f"nonfinite_step{state.step}.json"
        path.write_text(json.dumps(dump, indent=2))
        where = f" (batch dumped to {path})"
    raise NonFiniteLossError(f"non-finite loss {float(loss)} at step {state.step}{where}")


def train_step(source_batch, target_batch, state: TrainState) -> dict:
    if not source_batch:
        raise ValueError("empty source batch")
    if not target_batch and state.config.hyper.lam > 0:
        raise ValueError("target batch may only be empty when lambda = 0")
    state.model.train()
    losses = batch_losses(state.model, source_batch, target_batch, state.config, state.step)
    check_finite(losses["l_total"], source_batch, target_batch, state)
    state.optimizer.zero_grad()
    losses["l_total"].backward()
    state.optimizer.step()
    state.step += 1
    return {k: v.item() for k, v in losses.items()}


# --- batching ----------------------------------------------------------------

def _permutation(n: int, seed: int, stream: str, cycle: int) -> list[int]:
    order = list(range(n))
    random.Random(f"{seed}:{stream}:{cycle}").shuffle(order)
    return order


def steps_per_epoch(n_source: int, batch_size: int) -> int:
    return max(1, math.ceil(n_source / batch_size))


def source_batch_indices(step: int, n: int, batch_size: int, seed: int) -> list[int]:
    spe = steps_per_epoch(n, batch_size)
    epoch, pos = divmod(step, spe)
    order = _permutation(n, seed, "source", epoch)
    return order[pos * batch_size:(pos + 1) * batch_size]


def target_batch_indices(step: int, n: int, batch_size: int, seed: int) -> list[int]:
    """Target data cycles on its own, reshuffled each pass."""
    if n == 0:
        return []
    out = []
    for offset in range(step * batch_size, (step + 1) * batch_size):
        cycle, pos = divmod(offset, n)
        out.append(_permutation(n, seed, "target", cycle)[pos])
    return out


# --- checkpoints -------------------------------------------------------------

@dataclass
class Checkpoint:
    model_state: dict
    config: dict
    step: int
    rng_state: dict = field(default_factory=dict)
    optimizer_state: dict | None = None
    best_f1: float = -1.0
    adversarial_state: dict | None = None

    def save(self, path: str | Path) -> None:
        torch.save(self.__dict__, path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls(**torch.load(path, map_location="cpu", weights_only=False))

    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)

    def restore_model(self) -> SpanTripletModel:
        config = self.run_config()
        model = build_model(config)
        model.load_state_dict(self.model_state)
        model.eval()
        return model


def snapshot(state: TrainState) -> Checkpoint:
    return Checkpoint(
        model_state={k: v.detach().clone() for k, v in state.model.state_dict().items()},
        config=state.config.to_dict(),
        step=state.step,
        rng_state={"torch": torch.get_rng_state()},
        optimizer_state=state.optimizer.state_dict(),
        best_f1=state.best_f1,
        adversarial_state=None if state.adversarial is None else {
            "discriminator": state.adversarial.discriminator.state_dict(),
            "optimizer": state.adversarial.optimizer.state_dict(),
            "schedule": state.adversarial.schedule.state_dict(),
        },
    )


def _adversarial_state(model: SpanTripletModel, config: RunConfig) -> AdversarialState:
    disc = DomainDiscriminator(model.hidden_size, config.train.adv_hidden, config.model.activation)
    disc = disc.to(DTYPES[config.train.dtype])
    opt = torch.optim.AdamW(disc.parameters(), lr=config.train.lr_classifier, weight_decay=config.train.weight_decay)
    return AdversarialState(disc, opt, AdversarialSchedule(config.hyper.alpha), config.train.adv_weight)


def init_state(config: RunConfig, resume: Checkpoint | None = None) -> TrainState:
    model = build_model(config)
    state = TrainState(model=model, optimizer=make_optimizer(model, config), config=config)
    if config.train.adversarial:
        state.adversarial = _adversarial_state(model, config)
    if resume is not None:
        model.load_state_dict(resume.model_state)
        if resume.optimizer_state is not None:
            state.optimizer.load_state_dict(resume.optimizer_state)
        state.step = resume.step
        state.best_f1 = resume.best_f1
        if resume.rng_state.get("torch") is not None:
            torch.set_rng_state(resume.rng_state["torch"])
        if state.adversarial is not None and resume.adversarial_state:
            adv = resume.adversarial_state
            state.adversarial.discriminator.load_state_dict(adv["discriminator"])
            state.adversarial.optimizer.load_state_dict(adv["optimizer"])
            state.adversarial.schedule = AdversarialSchedule(**adv["schedule"])
    return state


def selection_sentences(pair: TransferPair, config: RunConfig) -> list[Sentence] | None:
    split = config.train.selection_split
    if split == "none":
        return None
    sents = pair.source_dev if split == "source_dev" else pair.target_dev
    if not sents:
        raise ValueError(f"model selection split {split!r} is empty")
    return sents


def total_steps(pair: TransferPair, config: RunConfig) -> int:
    tc = config.train
    if tc.max_steps is not None:
        return tc.max_steps
    return tc.epochs * steps_per_epoch(len(pair.source_train), tc.batch_size)


def train(pair: TransferPair, config: RunConfig, run_dir: str | Path | None = None, resume: Checkpoint | None = None) -> Checkpoint:
    """Train and return the best checkpoint by selection-split F1.

    Without a selection split (or when no evaluation has run yet) the last
    state is returned. With ``run_dir`` the resolved config, per-step
    metrics, ``last.pt`` and ``best.pt`` are written there.
    """
    tc = config.train
    if not pair.source_train:
        raise ValueError("no labeled source sentences")
    select = selection_sentences(pair, config)
    state = init_state(config, resume)
    out_dir = Path(run_dir) if run_dir is not None else None
    metrics_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        config.save(out_dir / "config.json")
        state.dump_dir = out_dir
        metrics_fh = open(out_dir / "metrics.jsonl", "a" if resume else "w", encoding="utf-8")

    n_src, n_tgt = len(pair.source_train), len(pair.target_train)
    spe = steps_per_epoch(n_src, tc.batch_size)
    last = total_steps(pair, config)
    best = snapshot(state) if state.step >= last or select is None else None
    lrs = {g.get("name", str(i)): g["lr"] for i, g in enumerate(state.optimizer.param_groups)}
    try:
        while state.step < last:
            step = state.step
            src = [pair.source_train[i] for i in source_batch_indices(step, n_src, tc.batch_size, tc.seed)]
            tgt = [pair.target_train[i] for i in target_batch_indices(step, n_tgt, len(src), tc.seed)]
            if state.adversarial is not None:
                metrics = at_train_step(src, tgt, state, state.adversarial)
            else:
                need_target = config.hyper.lam > 0
                metrics = train_step(src, tgt if need_target else [], state)
            record = {"step": state.step, **metrics, "lr": lrs["classifier"], "lr_encoder": lrs["encoder"]}
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record) + "\n")
            log.debug("step %d %s", state.step, metrics)

            if state.step % spe == 0 or state.step == last:
                if select is not None:
                    report = evaluate(state.model, select)
                    log.info("step %d selection F1 %.4f", state.step, report.f1)
                    if report.f1 > state.best_f1:
                        state.best_f1 = report.f1
                        best = snapshot(state)
                        if out_dir is not None:
                            best.save(out_dir / "best.pt")
                else:
                    best = snapshot(state)
                if out_dir is not None:
                    snapshot(state).save(out_dir / "last.pt")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    if best is None:
        best = snapshot(state)
    if out_dir is not None and not (out_dir / "best.pt").exists():
        best.save(out_dir / "best.pt")
    return best
